#include "graphgrade/dataset.hpp"

#include <sstream>

namespace graphgrade {

int encode_grade(std::span<const int> criteria_vector) {
  if (criteria_vector.empty()) {
    throw GradeError("criteria vector is empty");
  }
  if (criteria_vector.size() > static_cast<std::size_t>(kMaxCriteria)) {
    throw GradeError("criteria vector longer than " + std::to_string(kMaxCriteria));
  }
  int grade = 0;
  for (std::size_t i = 0; i < criteria_vector.size(); ++i) {
    const int bit = criteria_vector[i];
    if (bit != 0 && bit != 1) {
      throw GradeError("criterion " + std::to_string(i) + " is not binary: " + std::to_string(bit));
    }
    grade |= bit << i;
  }
  return grade;
}

std::vector<int> decode_grade(int grade, int m) {
  if (m < 1 || m > kMaxCriteria) {
    throw GradeError("criteria count out of range: " + std::to_string(m));
  }
  if (grade < 0 || grade >= (1 << m)) {
    throw GradeError("grade " + std::to_string(grade) + " out of range for " + std::to_string(m) +
                     " criteria");
  }
  std::vector<int> bits(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) bits[static_cast<std::size_t>(i)] = (grade >> i) & 1;
  return bits;
}

std::string format_criteria(std::span<const int> criteria_vector) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < criteria_vector.size(); ++i) {
    if (i > 0) out << ',';
    out << criteria_vector[i];
  }
  out << ']';
  return out.str();
}

}  // namespace graphgrade
