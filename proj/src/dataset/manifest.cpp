#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "graphgrade/dataset.hpp"

namespace graphgrade {

using nlohmann::json;

namespace {

std::string join_path(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string join_path(const std::string& base, std::size_t index) {
  return base + "/" + std::to_string(index);
}

const json& require(const json& object, const std::string& key, const std::string& where) {
  if (!object.is_object()) throw ManifestError(where, "expected an object");
  auto it = object.find(key);
  if (it == object.end()) throw ManifestError(join_path(where, key), "missing required key");
  return *it;
}

std::string require_string(const json& object, const std::string& key, const std::string& where) {
  const json& value = require(object, key, where);
  if (!value.is_string()) throw ManifestError(join_path(where, key), "expected a string");
  return value.get<std::string>();
}

const json& require_array(const json& object, const std::string& key, const std::string& where) {
  const json& value = require(object, key, where);
  if (!value.is_array()) throw ManifestError(join_path(where, key), "expected an array");
  return value;
}

int require_int(const json& value, const std::string& where) {
  if (!value.is_number_integer()) throw ManifestError(where, "expected an integer");
  return value.get<int>();
}

BoundingBox parse_bbox(const json& value, const std::string& where) {
  BoundingBox box;
  box.x = require_int(require(value, "x", where), join_path(where, "x"));
  box.y = require_int(require(value, "y", where), join_path(where, "y"));
  box.w = require_int(require(value, "w", where), join_path(where, "w"));
  box.h = require_int(require(value, "h", where), join_path(where, "h"));
  return box;
}

json bbox_json(const BoundingBox& box) {
  return json{{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}};
}

Submission parse_submission(const json& value, const std::string& where,
                            const std::string& module_id, const std::string& assignment_id) {
  Submission s;
  s.id = require_string(value, "id", where);
  s.module_id = module_id;
  s.assignment_id = assignment_id;
  s.original_image = require_string(value, "original_image", where);
  if (auto it = value.find("graph_crop"); it != value.end() && !it->is_null()) {
    if (!it->is_string()) throw ManifestError(join_path(where, "graph_crop"), "expected a string");
    s.graph_crop = it->get<std::string>();
  }
  if (auto it = value.find("extracted_text"); it != value.end()) {
    if (!it->is_string()) {
      throw ManifestError(join_path(where, "extracted_text"), "expected a string");
    }
    s.extracted_text = it->get<std::string>();
  }
  if (auto it = value.find("bbox"); it != value.end() && !it->is_null()) {
    s.bbox = parse_bbox(*it, join_path(where, "bbox"));
  }
  const std::string status = require_string(value, "status", where);
  try {
    s.status = status_from_string(status);
  } catch (const std::invalid_argument& e) {
    throw ManifestError(join_path(where, "status"), e.what());
  }
  return s;
}

Annotation parse_annotation(const json& value, const std::string& where) {
  Annotation a;
  a.submission_id = require_string(value, "submission_id", where);
  const json& vec = require_array(value, "criteria_vector", where);
  for (std::size_t i = 0; i < vec.size(); ++i) {
    a.criteria_vector.push_back(require_int(vec[i], join_path(join_path(where, "criteria_vector"), i)));
  }
  a.grade = require_int(require(value, "grade", where), join_path(where, "grade"));
  if (auto it = value.find("annotator_id"); it != value.end()) {
    if (!it->is_string()) throw ManifestError(join_path(where, "annotator_id"), "expected a string");
    a.annotator_id = it->get<std::string>();
  }
  return a;
}

}  // namespace

ManifestError::ManifestError(std::string location, const std::string& message)
    : std::runtime_error(location + ": " + message), location_(std::move(location)) {}

std::string to_string(SubmissionStatus status) {
  switch (status) {
    case SubmissionStatus::raw: return "raw";
    case SubmissionStatus::extracted: return "extracted";
    case SubmissionStatus::verified: return "verified";
  }
  return "raw";
}

SubmissionStatus status_from_string(const std::string& text) {
  if (text == "raw") return SubmissionStatus::raw;
  if (text == "extracted") return SubmissionStatus::extracted;
  if (text == "verified") return SubmissionStatus::verified;
  throw std::invalid_argument("unknown submission status '" + text + "'");
}

const Annotation* Assignment::annotation_for(const std::string& submission_id) const {
  for (const auto& a : annotations) {
    if (a.submission_id == submission_id) return &a;
  }
  return nullptr;
}

const Submission* Assignment::submission(const std::string& submission_id) const {
  for (const auto& s : submissions) {
    if (s.id == submission_id) return &s;
  }
  return nullptr;
}

Module* DatasetManifest::find_module(const std::string& id) {
  for (auto& m : modules) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

const Module* DatasetManifest::find_module(const std::string& id) const {
  return const_cast<DatasetManifest*>(this)->find_module(id);
}

Assignment* DatasetManifest::find_assignment(const std::string& module_id,
                                             const std::string& assignment_id) {
  Module* module = find_module(module_id);
  if (module == nullptr) return nullptr;
  for (auto& a : module->assignments) {
    if (a.id == assignment_id) return &a;
  }
  return nullptr;
}

const Assignment* DatasetManifest::find_assignment(const std::string& module_id,
                                                   const std::string& assignment_id) const {
  return const_cast<DatasetManifest*>(this)->find_assignment(module_id, assignment_id);
}

std::optional<DatasetManifest::SubmissionRef> DatasetManifest::find_submission(
    const std::string& submission_id) {
  for (auto& module : modules) {
    for (auto& assignment : module.assignments) {
      for (auto& submission : assignment.submissions) {
        if (submission.id == submission_id) return SubmissionRef{&module, &assignment, &submission};
      }
    }
  }
  return std::nullopt;
}

std::size_t DatasetManifest::submission_count() const {
  std::size_t n = 0;
  for (const auto& m : modules) {
    for (const auto& a : m.assignments) n += a.submissions.size();
  }
  return n;
}

std::size_t DatasetManifest::annotation_count() const {
  std::size_t n = 0;
  for (const auto& m : modules) {
    for (const auto& a : m.assignments) n += a.annotations.size();
  }
  return n;
}

void validate(const DatasetManifest& manifest) {
  if (manifest.schema_version != kSchemaVersion) {
    throw ManifestError("/schema_version",
                        "unsupported schema version " + std::to_string(manifest.schema_version));
  }
  std::set<std::string> module_ids;
  std::set<std::string> submission_ids;
  for (std::size_t mi = 0; mi < manifest.modules.size(); ++mi) {
    const Module& module = manifest.modules[mi];
    const std::string mpath = join_path("/modules", mi);
    if (module.id.empty()) throw ManifestError(join_path(mpath, "id"), "empty module id");
    if (!module_ids.insert(module.id).second) {
      throw ManifestError(join_path(mpath, "id"), "duplicate module id '" + module.id + "'");
    }
    std::set<std::string> assignment_ids;
    for (std::size_t ai = 0; ai < module.assignments.size(); ++ai) {
      const Assignment& assignment = module.assignments[ai];
      const std::string apath = join_path(join_path(mpath, "assignments"), ai);
      if (assignment.id.empty()) throw ManifestError(join_path(apath, "id"), "empty assignment id");
      if (!assignment_ids.insert(assignment.id).second) {
        throw ManifestError(join_path(apath, "id"),
                            "duplicate assignment id '" + assignment.id + "'");
      }
      const auto& criteria = assignment.rubric.criteria;
      const std::string cpath = join_path(apath, "criteria");
      // A freshly ingested assignment may wait for its rubric; annotating needs one.
      if (criteria.empty() && !assignment.annotations.empty()) {
        throw ManifestError(cpath, "rubric needs at least one criterion");
      }
      if (criteria.size() > static_cast<std::size_t>(kMaxCriteria)) {
        throw ManifestError(cpath, "more than " + std::to_string(kMaxCriteria) + " criteria");
      }
      std::set<std::string> criterion_ids;
      for (std::size_t ci = 0; ci < criteria.size(); ++ci) {
        if (criteria[ci].index != static_cast<int>(ci)) {
          throw ManifestError(join_path(join_path(cpath, ci), "index"),
                              "criterion indices must be 0..m-1 in authoring order");
        }
        if (!criterion_ids.insert(criteria[ci].id).second) {
          throw ManifestError(join_path(join_path(cpath, ci), "id"), "duplicate criterion id");
        }
      }
      const int m = assignment.rubric.m();

      std::set<std::string> local_ids;
      for (std::size_t si = 0; si < assignment.submissions.size(); ++si) {
        const Submission& s = assignment.submissions[si];
        const std::string spath = join_path(join_path(apath, "submissions"), si);
        if (s.id.empty()) throw ManifestError(join_path(spath, "id"), "empty submission id");
        if (!submission_ids.insert(s.id).second) {
          throw ManifestError(join_path(spath, "id"), "duplicate submission id '" + s.id + "'");
        }
        local_ids.insert(s.id);
        if (s.module_id != module.id || s.assignment_id != assignment.id) {
          throw ManifestError(spath, "submission does not reference its enclosing assignment");
        }
        if (s.bbox && (s.bbox->w <= 0 || s.bbox->h <= 0)) {
          throw ManifestError(join_path(spath, "bbox"), "bounding box must have positive size");
        }
        if (s.status == SubmissionStatus::verified && (!s.bbox || !s.graph_crop)) {
          throw ManifestError(join_path(spath, "status"),
                              "verified submission requires bbox and graph_crop");
        }
      }

      std::set<std::string> annotated;
      for (std::size_t ni = 0; ni < assignment.annotations.size(); ++ni) {
        const Annotation& a = assignment.annotations[ni];
        const std::string npath = join_path(join_path(apath, "annotations"), ni);
        if (!local_ids.contains(a.submission_id)) {
          throw ManifestError(join_path(npath, "submission_id"),
                              "dangling reference to submission '" + a.submission_id + "'");
        }
        if (!annotated.insert(a.submission_id).second) {
          throw ManifestError(join_path(npath, "submission_id"),
                              "submission '" + a.submission_id + "' annotated twice");
        }
        if (static_cast<int>(a.criteria_vector.size()) != m) {
          throw ManifestError(join_path(npath, "criteria_vector"),
                              "expected " + std::to_string(m) + " entries, got " +
                                  std::to_string(a.criteria_vector.size()));
        }
        for (std::size_t bi = 0; bi < a.criteria_vector.size(); ++bi) {
          const int bit = a.criteria_vector[bi];
          if (bit != 0 && bit != 1) {
            throw ManifestError(join_path(join_path(npath, "criteria_vector"), bi),
                                "criterion value must be 0 or 1");
          }
        }
        if (a.grade != encode_grade(a.criteria_vector)) {
          throw ManifestError(join_path(npath, "grade"), "grade does not match criteria vector");
        }
      }
    }
  }
}

json to_json(const DatasetManifest& manifest) {
  json modules = json::array();
  for (const auto& module : manifest.modules) {
    json assignments = json::array();
    for (const auto& a : module.assignments) {
      json criteria = json::array();
      for (const auto& c : a.rubric.criteria) {
        criteria.push_back({{"id", c.id}, {"description", c.description}, {"index", c.index}});
      }
      json submissions = json::array();
      for (const auto& s : a.submissions) {
        submissions.push_back({
            {"id", s.id},
            {"original_image", s.original_image},
            {"graph_crop", s.graph_crop ? json(*s.graph_crop) : json(nullptr)},
            {"extracted_text", s.extracted_text},
            {"bbox", s.bbox ? bbox_json(*s.bbox) : json(nullptr)},
            {"status", to_string(s.status)},
        });
      }
      json annotations = json::array();
      for (const auto& n : a.annotations) {
        annotations.push_back({{"submission_id", n.submission_id},
                               {"criteria_vector", n.criteria_vector},
                               {"grade", n.grade},
                               {"annotator_id", n.annotator_id}});
      }
      assignments.push_back({{"id", a.id},
                             {"task_description", a.rubric.task_description},
                             {"criteria", std::move(criteria)},
                             {"submissions", std::move(submissions)},
                             {"annotations", std::move(annotations)}});
    }
    modules.push_back({{"id", module.id}, {"assignments", std::move(assignments)}});
  }
  return json{{"schema_version", manifest.schema_version}, {"modules", std::move(modules)}};
}

DatasetManifest manifest_from_json(const json& document) {
  DatasetManifest manifest;
  if (!document.is_object()) throw ManifestError("", "manifest must be a JSON object");
  manifest.schema_version = require_int(require(document, "schema_version", ""), "/schema_version");
  const json& modules = require_array(document, "modules", "");
  for (std::size_t mi = 0; mi < modules.size(); ++mi) {
    const std::string mpath = join_path("/modules", mi);
    Module module;
    module.id = require_string(modules[mi], "id", mpath);
    const json& assignments = require_array(modules[mi], "assignments", mpath);
    for (std::size_t ai = 0; ai < assignments.size(); ++ai) {
      const std::string apath = join_path(join_path(mpath, "assignments"), ai);
      const json& aj = assignments[ai];
      Assignment a;
      a.id = require_string(aj, "id", apath);
      a.rubric.assignment_id = a.id;
      a.rubric.task_description = require_string(aj, "task_description", apath);
      const json& criteria = require_array(aj, "criteria", apath);
      for (std::size_t ci = 0; ci < criteria.size(); ++ci) {
        const std::string cpath = join_path(join_path(apath, "criteria"), ci);
        Criterion c;
        c.id = require_string(criteria[ci], "id", cpath);
        c.description = require_string(criteria[ci], "description", cpath);
        c.index = require_int(require(criteria[ci], "index", cpath), join_path(cpath, "index"));
        a.rubric.criteria.push_back(std::move(c));
      }
      const json& submissions = require_array(aj, "submissions", apath);
      for (std::size_t si = 0; si < submissions.size(); ++si) {
        a.submissions.push_back(parse_submission(
            submissions[si], join_path(join_path(apath, "submissions"), si), module.id, a.id));
      }
      const json& annotations = require_array(aj, "annotations", apath);
      for (std::size_t ni = 0; ni < annotations.size(); ++ni) {
        a.annotations.push_back(
            parse_annotation(annotations[ni], join_path(join_path(apath, "annotations"), ni)));
      }
      module.assignments.push_back(std::move(a));
    }
    manifest.modules.push_back(std::move(module));
  }
  validate(manifest);
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ManifestError("", std::string("malformed JSON: ") + e.what());
  }
  return manifest_from_json(document);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate(manifest);
  write_file_atomic(path, to_json(manifest).dump(2) + "\n");
}

}  // namespace graphgrade
