#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "graphgrade/vllm.hpp"

namespace graphgrade::vllm {

using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

ImagePayload load_image_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  ImagePayload p;
  if (ext == ".jpg" || ext == ".jpeg") {
    p.media_type = "image/jpeg";
  } else if (ext == ".webp") {
    p.media_type = "image/webp";
  } else {
    p.media_type = "image/png";
  }
  p.base64 = base64_encode(bytes);
  return p;
}

std::string format_reply(const std::vector<int>& criteria) {
  std::string out = "[";
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(criteria[i]);
  }
  return out + "]";
}

std::string system_text() {
  return "You are a helpful assistant for grading students' handwritten responses in math-related economics "
         "courses. You will be provided with a task description, an ordered list of grading criteria, and an "
         "image of student's answer. Your task is to evaluate the graph in the image based on the provided "
         "grading criteria and output a list indicating which criteria are fulfilled. You may also consider the "
         "text within the image when grading. Judge every criterion independently and keep the order of the "
         "list.\n\n"
         "The output should be a list of binary values (1 or 0), where 1 indicates that the corresponding "
         "criterion is fulfilled and 0 means it is not fulfilled. For example, [1,0] means that the first "
         "criterion is fulfilled and the second one is not.\n\n"
         "The output format must be a valid JSON.\n"
         "Do not wrap the JSON output in markdown.\n"
         "Do not include any explanatory text in the output.";
}

PromptBundle build_prompt(const Rubric& rubric, const std::vector<SupportExample>& support,
                          const ImagePayload& query) {
  PromptBundle b;
  b.system_text = system_text();
  b.task_description = rubric.task_description;
  for (const auto& c : rubric.criteria) b.criteria.push_back(c.description.empty() ? c.id : c.id + ": " + c.description);
  for (const auto& s : support) {
    if (!s.criteria) throw PromptError("support item '" + s.submission_id + "' has no annotation");
    if (static_cast<int>(s.criteria->size()) != rubric.m()) {
      throw PromptError("support item '" + s.submission_id + "' has " + std::to_string(s.criteria->size()) +
                        " criteria, rubric has " + std::to_string(rubric.m()));
    }
    b.few_shot_pairs.push_back({s.image, format_reply(*s.criteria)});
  }
  b.query_image = query;
  return b;
}

json PromptBundle::messages() const {
  std::string criteria_list = "[";
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (i) criteria_list += ", ";
    criteria_list += criteria[i];
  }
  criteria_list += "]";
  auto image_message = [](const ImagePayload& img) {
    return json{{"role", "user"},
                {"content", json::array({{{"type", "image_url"}, {"image_url", {{"url", img.data_url()}}}}})}};
  };
  json out = json::array();
  out.push_back({{"role", "system"},
                 {"content", system_text + "\n\nTask Description: " + task_description +
                                 "\n\nGrading Criteria: " + criteria_list}});
  for (const auto& pair : few_shot_pairs) {
    out.push_back(image_message(pair.image));
    out.push_back({{"role", "assistant"}, {"content", pair.reply}});
  }
  out.push_back(image_message(query_image));
  return out;
}

std::string PromptBundle::hash() const { return sha256_hex(messages().dump()); }

}  // namespace graphgrade::vllm
