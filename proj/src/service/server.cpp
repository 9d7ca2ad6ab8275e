#include <fstream>
#include <iterator>

#include <spdlog/spdlog.h>

#include "graphgrade/dataset.hpp"
#include "graphgrade/preprocess.hpp"
#include "graphgrade/service.hpp"
#include "graphgrade/store.hpp"

#include <httplib.h>

namespace graphgrade::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct HttpError : std::runtime_error {
  HttpError(int status, const std::string& message) : std::runtime_error(message), status(status) {}
  int status;
};

json box_json(const BoundingBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

json submission_json(const Submission& s, const Assignment& a) {
  json j = {{"id", s.id},
            {"module", s.module_id},
            {"assignment", s.assignment_id},
            {"original_image", s.original_image},
            {"graph_crop", s.graph_crop ? json(*s.graph_crop) : json(nullptr)},
            {"extracted_text", s.extracted_text},
            {"bbox", s.bbox ? box_json(*s.bbox) : json(nullptr)},
            {"status", to_string(s.status)},
            {"annotation", nullptr}};
  if (const Annotation* an = a.annotation_for(s.id)) {
    j["annotation"] = {{"criteria_vector", an->criteria_vector},
                       {"grade", an->grade},
                       {"annotator_id", an->annotator_id}};
  }
  return j;
}

json assignment_json(const Module& m, const Assignment& a) {
  json criteria = json::array();
  for (const auto& c : a.rubric.criteria) {
    criteria.push_back({{"id", c.id}, {"description", c.description}, {"index", c.index}});
  }
  return {{"module", m.id},
          {"id", a.id},
          {"task_description", a.rubric.task_description},
          {"criteria", criteria},
          {"submissions", a.submissions.size()},
          {"annotations", a.annotations.size()}};
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw HttpError(400, "request body must be a JSON object");
  return body;
}

struct Located {
  Assignment* assignment = nullptr;
  Submission* submission = nullptr;
};

Located locate(DatasetManifest& manifest, const std::string& id) {
  auto ref = manifest.find_submission(id);
  if (!ref) throw HttpError(404, "unknown submission '" + id + "'");
  return {ref->assignment, ref->submission};
}

}  // namespace

struct Server::Impl {
  ServiceConfig config;
  WriterLock lock;
  DatasetStore store;
  httplib::Server http;

  explicit Impl(ServiceConfig c) : config(std::move(c)), lock(config.dataset_root), store(config.dataset_root) {
    routes();
  }

  void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        if (!config.token.empty() && req.get_header_value("X-Grader-Token") != config.token) {
          throw HttpError(401, "missing or invalid X-Grader-Token");
        }
        fn(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, {{"error", e.what()}});
      } catch (const ManifestError& e) {
        reply(res, 422, {{"error", e.what()}, {"location", e.location()}});
      } catch (const std::invalid_argument& e) {
        reply(res, 422, {{"error", e.what()}});
      } catch (const std::exception& e) {
        spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
        reply(res, 500, {{"error", e.what()}});
      }
    };
  }

  void send_file(httplib::Response& res, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw HttpError(404, "image file is missing");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string ext = path.extension().string();
    res.set_content(bytes, ext == ".jpg" || ext == ".jpeg" ? "image/jpeg" : "image/png");
  }

  void routes() {
    http.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", config.cors_origin);
      res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Grader-Token");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    });
    http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http.Get("/api/modules", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      store.read([&](const DatasetManifest& m) {
        for (const auto& module : m.modules) {
          out.push_back({{"id", module.id}, {"assignments", module.assignments.size()}});
        }
        return 0;
      });
      reply(res, 200, out);
    }));

    http.Get("/api/assignments", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string module_id = req.get_param_value("module");
      json out = json::array();
      store.read([&](const DatasetManifest& m) {
        if (!module_id.empty() && !m.find_module(module_id)) throw HttpError(404, "unknown module '" + module_id + "'");
        for (const auto& module : m.modules) {
          if (!module_id.empty() && module.id != module_id) continue;
          for (const auto& a : module.assignments) out.push_back(assignment_json(module, a));
        }
        return 0;
      });
      reply(res, 200, out);
    }));

    http.Get("/api/submissions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string module_id = req.get_param_value("module");
      const std::string assignment_id = req.get_param_value("assignment");
      const std::string status = req.get_param_value("status");
      if (!status.empty()) status_from_string(status);
      json out = json::array();
      store.read([&](const DatasetManifest& m) {
        for (const auto& module : m.modules) {
          if (!module_id.empty() && module.id != module_id) continue;
          for (const auto& a : module.assignments) {
            if (!assignment_id.empty() && a.id != assignment_id) continue;
            for (const auto& s : a.submissions) {
              if (!status.empty() && to_string(s.status) != status) continue;
              out.push_back(submission_json(s, a));
            }
          }
        }
        return 0;
      });
      reply(res, 200, out);
    }));

    http.Get(R"(/api/submissions/([^/]+)/(image|crop))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const bool crop = req.matches[2] == "crop";
               DatasetManifest m = store.snapshot();
               const Located at = locate(m, id);
               if (crop && !at.submission->graph_crop) throw HttpError(404, "submission has no crop yet");
               send_file(res, store.root() / (crop ? *at.submission->graph_crop : at.submission->original_image));
             }));

    http.Put(R"(/api/assignments/([^/]+)/rubric)", guarded([this](const httplib::Request& req,
                                                                  httplib::Response& res) {
      const std::string assignment_id = req.matches[1];
      const json body = parse_body(req);
      std::string module_id = req.get_param_value("module");
      if (module_id.empty()) module_id = body.value("module", "");
      if (!body.contains("criteria") || !body["criteria"].is_array()) throw HttpError(422, "criteria must be a list");
      Rubric rubric;
      rubric.assignment_id = assignment_id;
      int index = 0;
      for (const auto& c : body["criteria"]) {
        if (!c.is_object() || !c.contains("description") || !c["description"].is_string()) {
          throw HttpError(422, "each criterion needs a description");
        }
        Criterion crit;
        crit.index = index++;
        crit.id = c.value("id", "c" + std::to_string(crit.index));
        crit.description = c["description"].get<std::string>();
        rubric.criteria.push_back(std::move(crit));
      }
      if (rubric.criteria.empty()) throw HttpError(422, "a rubric needs at least one criterion");
      json out;
      store.update([&](DatasetManifest& m) {
        Module* owner = nullptr;
        Assignment* target = nullptr;
        for (auto& module : m.modules) {
          if (!module_id.empty() && module.id != module_id) continue;
          for (auto& a : module.assignments) {
            if (a.id != assignment_id) continue;
            if (target) throw HttpError(409, "assignment id is ambiguous; pass ?module=");
            owner = &module;
            target = &a;
          }
        }
        if (!target) throw HttpError(404, "unknown assignment '" + assignment_id + "'");
        rubric.task_description = body.value("task_description", target->rubric.task_description);
        target->rubric = rubric;
        out = assignment_json(*owner, *target);
      });
      reply(res, 200, out);
    }));

    http.Post(R"(/api/submissions/([^/]+)/annotation)", guarded([this](const httplib::Request& req,
                                                                       httplib::Response& res) {
      const std::string id = req.matches[1];
      const json body = parse_body(req);
      const json& vec = body.contains("criteria_vector") ? body["criteria_vector"] : body.value("criteria", json());
      if (!vec.is_array()) throw HttpError(422, "criteria_vector must be a list");
      std::vector<int> criteria;
      for (const auto& v : vec) {
        if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
          throw HttpError(422, "criteria values must be 0 or 1");
        }
        criteria.push_back(v.get<int>());
      }
      const std::string annotator = body.value("annotator_id", "annotator");
      json out;
      store.update([&](DatasetManifest& m) {
        const Located at = locate(m, id);
        if (static_cast<int>(criteria.size()) != at.assignment->rubric.m()) {
          throw HttpError(422, "expected " + std::to_string(at.assignment->rubric.m()) + " criteria, got " +
                                   std::to_string(criteria.size()));
        }
        Annotation a{id, criteria, encode_grade(criteria), annotator};
        auto& list = at.assignment->annotations;
        auto it = std::find_if(list.begin(), list.end(), [&](const Annotation& x) { return x.submission_id == id; });
        if (it == list.end()) {
          list.push_back(a);
        } else {
          *it = a;
        }
        out = submission_json(*at.submission, *at.assignment);
      });
      reply(res, 200, out);
    }));

    http.Post(R"(/api/submissions/([^/]+)/bbox)", guarded([this](const httplib::Request& req,
                                                                 httplib::Response& res) {
      const std::string id = req.matches[1];
      const json body = parse_body(req);
      const bool accepted = body.value("accepted", false);
      std::optional<BoundingBox> rect;
      if (body.contains("x")) {
        for (const char* k : {"x", "y", "w", "h"}) {
          if (!body.contains(k) || !body[k].is_number_integer()) throw HttpError(422, "rect needs integer x, y, w, h");
        }
        rect = BoundingBox{body["x"].get<int>(), body["y"].get<int>(), body["w"].get<int>(), body["h"].get<int>()};
        if (rect->w <= 0 || rect->h <= 0) throw HttpError(422, "rect width and height must be positive");
      }
      json out;
      store.update([&](DatasetManifest& m) {
        const Located at = locate(m, id);
        if (!rect) {
          if (!accepted || !at.submission->bbox) throw HttpError(422, "no rect given and no proposal to accept");
          rect = *at.submission->bbox;
        }
        const RecropResult r = recrop_submission(*at.submission, store.root(), *rect);
        out = submission_json(*at.submission, *at.assignment);
        out["clamped"] = r.clamped;
        if (r.clamped) out["warning"] = "rect was clamped to the image bounds";
      });
      reply(res, 200, out);
    }));

    http.Get("/api/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& row : store.read([](const DatasetManifest& m) { return compute_stats(m); })) {
        out.push_back({{"module", row.module_id},
                       {"assignment", row.assignment_id},
                       {"grade", row.grade},
                       {"count", row.count}});
      }
      reply(res, 200, out);
    }));
  }
};

Server::Server(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

int Server::bind(int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(impl_->config.host);
    if (bound < 0) throw std::runtime_error("cannot bind to " + impl_->config.host);
    return bound;
  }
  if (!impl_->http.bind_to_port(impl_->config.host, port)) {
    throw std::runtime_error("port " + std::to_string(port) + " is busy");
  }
  return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace graphgrade::service
