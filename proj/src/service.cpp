#include "care/service.hpp"

#include <regex>

#include <httplib.h>
#include <openssl/evp.h>

#include "care/counterfactual.hpp"
#include "care/error.hpp"
#include "care/signal_io.hpp"

namespace care {

using json = nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::ZeroProbabilityEvidence: return 409;
    case ErrorCode::RemoteUnavailable:
    case ErrorCode::Timeout: return 502;
    case ErrorCode::InvalidArgument:
    case ErrorCode::MalformedCsv:
    case ErrorCode::TooShort:
    case ErrorCode::BadRate:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::HeaderMismatch:
    case ErrorCode::DuplicateRecordId:
    case ErrorCode::LeadNotFound:
    case ErrorCode::NoPeaks:
    case ErrorCode::EncodeFailure:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::UnknownNode:
    case ErrorCode::UnknownState:
    case ErrorCode::LengthMismatch:
    case ErrorCode::UsageError: return 400;
    default: return 500;
  }
}

namespace {

ServiceResponse error_response(const Error& e) {
  return {http_status(e.code()), json{{"error", e.what()}, {"code", std::string(to_string(e.code()))}, {"detail", e.detail()}}};
}

std::string decode_base64(const std::string& in) {
  std::string clean;
  for (char c : in) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean += c;
  }
  if (clean.size() % 4 != 0) throw Error(ErrorCode::InvalidArgument, "base64 payload has bad length");
  std::string out(clean.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "invalid base64 payload");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

json record_info_json(const StoredRecordInfo& i) {
  return json{{"record_id", i.record_id},
              {"patient_id", i.patient_id ? json(*i.patient_id) : json(nullptr)},
              {"acquired_at", i.acquired_at ? json(*i.acquired_at) : json(nullptr)},
              {"sampling_rate_hz", i.sampling_rate_hz},
              {"lead_names", i.lead_names},
              {"num_samples", i.num_samples}};
}

EcgRecord record_from_upload(const json& body) {
  const auto format = body.value("format", std::string("csv"));
  EcgRecord rec;
  if (format == "csv") {
    CsvReadOptions opts;
    opts.sampling_rate_hz = body.value("sampling_rate_hz", opts.sampling_rate_hz);
    opts.lead_names = body.value("lead_names", opts.lead_names);
    opts.scale = body.value("scale", opts.scale);
    if (!body.contains("record_id")) throw Error(ErrorCode::InvalidArgument, "CSV upload needs a record_id");
    opts.record_id = body.at("record_id").get<std::string>();
    std::string content;
    if (body.contains("content")) {
      content = body.at("content").get<std::string>();
    } else if (body.contains("content_base64")) {
      content = decode_base64(body.at("content_base64").get<std::string>());
    } else {
      throw Error(ErrorCode::InvalidArgument, "CSV upload needs content or content_base64");
    }
    rec = parse_csv_record(content, opts, "upload");
  } else if (format == "wfdb") {
    if (!body.contains("header") || !body.contains("signal_base64")) {
      throw Error(ErrorCode::InvalidArgument, "WFDB upload needs header and signal_base64");
    }
    rec = parse_wfdb16_record(body.at("header").get<std::string>(), decode_base64(body.at("signal_base64").get<std::string>()));
    if (body.contains("record_id")) rec.record_id = body.at("record_id").get<std::string>();
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "upload format " + format);
  }
  if (body.contains("patient_id")) rec.patient_id = body.at("patient_id").get<std::string>();
  if (body.contains("acquired_at")) rec.acquired_at = body.at("acquired_at").get<double>();
  if (rec.record_id.empty()) throw Error(ErrorCode::InvalidArgument, "upload needs a record_id");
  return rec;
}

}  // namespace

struct Service::Server {
  httplib::Server http;
};

Service::Service(std::shared_ptr<const PipelineHandle> handle) : handle_(std::move(handle)) {
  if (!handle_) throw Error(ErrorCode::InvalidArgument, "service needs a pipeline handle");
}

Service::~Service() { stop(); }

std::shared_ptr<const PipelineHandle> Service::handle() const {
  std::lock_guard lock(mu_);
  return handle_;
}

void Service::swap(std::shared_ptr<const PipelineHandle> next) {
  if (!next) throw Error(ErrorCode::InvalidArgument, "cannot swap in an empty handle");
  std::lock_guard lock(mu_);
  handle_ = std::move(next);
}

ServiceResponse Service::dispatch(const std::string& method, const std::string& path, const std::string& body,
                                  const std::map<std::string, std::string>& params) {
  const auto h = handle();
  try {
    json parsed = json::object();
    if (!body.empty()) {
      try {
        parsed = json::parse(body);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("request body is not JSON: ") + e.what());
      }
      if (!parsed.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    }
    return route(h, method, path, parsed, params);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const json::exception& e) {
    return error_response(Error(ErrorCode::InvalidArgument, e.what()));
  } catch (const std::exception& e) {
    return error_response(Error(ErrorCode::IoError, e.what()));
  }
}

ServiceResponse Service::route(const std::shared_ptr<const PipelineHandle>& h, const std::string& method,
                               const std::string& path, const json& body,
                               const std::map<std::string, std::string>& params) {
  static const std::regex record_re(R"(^/records/([A-Za-z0-9._-]+)(/([a-z]+))?$)");
  const auto& outcome = h->config.outcome;

  if (method == "GET" && path == "/health") return {200, json{{"status", "ok"}, {"version", h->version}}};
  if (method == "GET" && path == "/graph") return {200, to_json(h->network)};
  if (path == "/records") {
    if (method == "GET") {
      json list = json::array();
      h->store->read([&](const RecordStore& s) {
        for (const auto& id : s.list_records()) list.push_back(record_info_json(s.info(id)));
        return 0;
      });
      return {200, json{{"records", list}}};
    }
    if (method == "POST") {
      const auto rec = record_from_upload(body);
      h->store->store(rec);
      return {201, h->store->read([&](const RecordStore& s) { return record_info_json(s.info(rec.record_id)); })};
    }
  }

  std::smatch m;
  if (!std::regex_match(path, m, record_re)) throw Error(ErrorCode::NotFound, "no route for " + method + " " + path);
  const std::string id = m[1];
  const std::string action = m[3];
  const bool known = h->store->read([&](const RecordStore& s) { return s.contains(id); }) || h->vectors.count(id);
  if (!known) throw Error(ErrorCode::NotFound, "record " + id);

  if (method == "GET" && action.empty()) {
    return {200, h->store->read([&](const RecordStore& s) {
              if (!s.contains(id)) throw Error(ErrorCode::NotFound, "record " + id + " has no stored waveform");
              auto info = record_info_json(s.info(id));
              if (auto it = params.find("samples"); it != params.end() && (it->second == "1" || it->second == "true")) {
                info["samples"] = s.load(id).samples;
              }
              return info;
            })};
  }
  if (method == "GET" && action == "biomarkers") {
    const auto v = h->biomarkers(id);
    auto e = discretize(h->discretizer, v);
    e.record_id = id;
    return {200, json{{"biomarkers", to_json(v)}, {"evidence", to_json(e)}}};
  }
  if (method == "GET" && action == "posterior") return {200, to_json(infer_posterior(h->network, h->evidence(id), outcome))};
  if (method == "GET" && action == "drivers") {
    return {200, to_json(rank_contributions(h->network, h->evidence(id), outcome))};
  }
  if (method == "POST" && action == "whatif") {
    const auto overrides = body.value("overrides", std::map<std::string, int>{});
    return {200, to_json(whatif(h->network, h->evidence(id), overrides, outcome))};
  }
  if (method == "POST" && action == "counterfactual") {
    if (!body.contains("target")) throw Error(ErrorCode::InvalidArgument, "counterfactual needs a target state");
    const auto e = h->evidence(id);
    const auto r = find_counterfactual(h->network, e, outcome, body.at("target").get<std::string>(),
                                       body.value("max_edits", h->config.counterfactual_max_edits));
    return {200, to_json(r, h->network, e)};
  }
  if (method == "POST" && action == "explain") {
    std::optional<bool> fallback;
    if (body.contains("fallback_enabled")) fallback = body.at("fallback_enabled").get<bool>();
    const auto c = explain_record(*h, id, body.value("query", std::string{}), fallback);
    return {200, audit_json(c.message, c.payload)};
  }
  throw Error(ErrorCode::NotFound, "no route for " + method + " " + path);
}

void Service::bind(const std::string& host, int port) {
  server_ = std::make_unique<Server>();
  auto& http = server_->http;
  const auto origin = handle()->config.cors_origin;
  auto forward = [this, origin](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> params(req.params.begin(), req.params.end());
    std::string body = req.body;
    if (req.is_multipart_form_data()) {
      // Multipart uploads become the JSON upload shape.
      json j = json::object();
      for (const auto& [name, file] : req.files) {
        if (name == "file" || name == "content") j["content_base64"] = httplib::detail::base64_encode(file.content);
        else if (name == "signal") j["signal_base64"] = httplib::detail::base64_encode(file.content);
        else if (name == "header") j["header"] = file.content;
        else if (name == "sampling_rate_hz" || name == "scale" || name == "acquired_at") j[name] = std::stod(file.content);
        else if (name == "lead_names") j[name] = json::parse(file.content);
        else j[name] = file.content;
      }
      body = j.dump();
    }
    const auto r = dispatch(req.method, req.path, body, params);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_content(r.body.dump(), "application/json");
  };
  http.Get(R"(/.*)", forward);
  http.Post(R"(/.*)", forward);
  http.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  if (port == 0) {
    port_ = http.bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorCode::BindFailure, "cannot bind " + host);
  } else {
    if (!http.bind_to_port(host, port)) throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
  }
}

void Service::serve() {
  if (!server_) throw Error(ErrorCode::BindFailure, "serve() before bind()");
  server_->http.listen_after_bind();
}

void Service::stop() {
  if (server_) server_->http.stop();
}

}  // namespace care
