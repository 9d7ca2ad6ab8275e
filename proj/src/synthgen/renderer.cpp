#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <opencv2/imgproc.hpp>

#include "graphgrade/synthgen.hpp"

namespace graphgrade::synth {

namespace {

constexpr int kPageWidth = 520;
constexpr int kPageHeight = 440;
constexpr int kStrokeSamples = 48;

const std::vector<cv::Scalar> kInkPalette{
    {20, 20, 20}, {170, 60, 20}, {30, 30, 190}, {40, 140, 40}, {130, 30, 120}};

bool is_shift(TemplateKind kind) {
  return kind == TemplateKind::demand_shift || kind == TemplateKind::supply_shift;
}

double direction_sign(ShiftDirection d) {
  switch (d) {
    case ShiftDirection::left: return -1.0;
    case ShiftDirection::right: return 1.0;
    case ShiftDirection::none: return 0.0;
  }
  return 0.0;
}

struct Canvas {
  cv::Mat image;
  std::vector<cv::Point2d> extent;  // every drawn diagram point
  std::mt19937_64& rng;

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double gaussian(double sigma) {
    return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
  }

  void polyline(const std::vector<cv::Point2d>& points, const cv::Scalar& color, int thickness) {
    std::vector<cv::Point> pts;
    pts.reserve(points.size());
    for (const auto& p : points) {
      pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
      extent.push_back(p);
    }
    cv::polylines(image, pts, false, color, thickness, cv::LINE_AA);
  }

  void text(const std::string& label, cv::Point2d at, double scale, const cv::Scalar& color,
            bool diagram) {
    int baseline = 0;
    const cv::Size size = cv::getTextSize(label, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
    cv::putText(image, label, cv::Point(static_cast<int>(at.x), static_cast<int>(at.y)),
                cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
    if (diagram) {
      extent.push_back(at + cv::Point2d(0, baseline));
      extent.push_back(at + cv::Point2d(size.width, -size.height));
    }
  }
};

/// Hand-drawn stroke along a straight centerline: sinusoidal waviness plus Gaussian jitter,
/// both perpendicular to the line.
std::vector<cv::Point2d> wobble(Canvas& canvas, const std::vector<cv::Point2d>& centerline,
                                double waviness, double jitter) {
  const cv::Point2d a = centerline.front();
  const cv::Point2d b = centerline.back();
  cv::Point2d normal(-(b.y - a.y), b.x - a.x);
  const double len = std::hypot(normal.x, normal.y);
  if (len > 0) normal *= 1.0 / len;
  const double frequency = canvas.uniform(1.0, 2.5);
  const double phase = canvas.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<cv::Point2d> out;
  out.reserve(centerline.size());
  for (std::size_t i = 0; i < centerline.size(); ++i) {
    const double t = centerline.size() > 1 ? static_cast<double>(i) / (centerline.size() - 1) : 0;
    const double offset = waviness * std::sin(2.0 * std::numbers::pi * frequency * t + phase) +
                          canvas.gaussian(jitter);
    out.push_back(centerline[i] + normal * offset);
  }
  return out;
}

std::vector<cv::Point2d> sample_line(cv::Point2d a, cv::Point2d b, int samples) {
  std::vector<cv::Point2d> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / (samples - 1);
    pts.push_back(a + (b - a) * t);
  }
  return pts;
}

std::optional<cv::Point2d> intersect(cv::Point2d p1, cv::Point2d p2, cv::Point2d q1,
                                     cv::Point2d q2) {
  const cv::Point2d r = p2 - p1;
  const cv::Point2d s = q2 - q1;
  const double denom = r.x * s.y - r.y * s.x;
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const cv::Point2d qp = q1 - p1;
  const double t = (qp.x * s.y - qp.y * s.x) / denom;
  return p1 + r * t;
}

}  // namespace

Rubric TaskSpec::rubric() const {
  Rubric rubric;
  rubric.assignment_id = assignment_id.empty() ? task_id : assignment_id;
  rubric.task_description = task_description;
  for (std::size_t i = 0; i < criteria_templates.size(); ++i) {
    rubric.criteria.push_back(
        {"c" + std::to_string(i), criteria_templates[i].description, static_cast<int>(i)});
  }
  return rubric;
}

void TaskSpec::validate() const {
  if (task_id.empty()) throw std::invalid_argument("task spec needs a task_id");
  if (criteria_templates.empty() || m() > kMaxCriteria) {
    throw std::invalid_argument("task '" + task_id + "' needs 1.." + std::to_string(kMaxCriteria) +
                                " criteria templates");
  }
  std::set<TemplateKind> seen;
  for (const auto& t : criteria_templates) {
    if (!seen.insert(t.kind).second) {
      throw std::invalid_argument("task '" + task_id +
                                  "': two templates control the same property");
    }
    if (is_shift(t.kind) && t.when_set == t.when_unset) {
      throw std::invalid_argument("task '" + task_id +
                                  "': shift template draws the same curve for both bit values");
    }
  }
  if (style.stroke_min < 1 || style.stroke_max < style.stroke_min) {
    throw std::invalid_argument("task '" + task_id + "': invalid stroke width range");
  }
  if (style.shift_offset <= 0.0 || style.shift_offset > 0.3) {
    throw std::invalid_argument("task '" + task_id + "': shift offset must lie in (0, 0.3]");
  }
}

const Scene::Curve* Scene::find(const std::string& role) const {
  for (const auto& c : curves) {
    if (c.role == role) return &c;
  }
  return nullptr;
}

TaskSpec shift_direction_task(std::string task_id, double shift_offset) {
  TaskSpec spec;
  spec.task_id = std::move(task_id);
  spec.task_description =
      "Zeichnen Sie ein Preis-Mengen-Diagramm und zeigen Sie die Auswirkung der Situation auf die "
      "Nachfrage.";
  spec.criteria_templates = {{TemplateKind::demand_shift,
                              "correct shift of demand curve to the right", ShiftDirection::right,
                              ShiftDirection::left}};
  spec.text_templates = {"Angebot und Nachfrage", "Gleichgewicht verschiebt sich",
                         "Preis und Menge", "neue Situation", "Markt fuer Bretter"};
  spec.style.shift_offset = shift_offset;
  return spec;
}

TaskSpec shift_and_labels_task(std::string task_id) {
  TaskSpec spec = shift_direction_task(std::move(task_id));
  spec.criteria_templates[0].when_unset = ShiftDirection::none;
  spec.criteria_templates.push_back(
      {TemplateKind::axes_labeled, "axes labeled with price and quantity", ShiftDirection::none,
       ShiftDirection::none});
  return spec;
}

GeneratedSubmission generate_submission(const TaskSpec& spec,
                                        const std::vector<int>& criteria_vector,
                                        std::uint64_t seed) {
  spec.validate();
  if (static_cast<int>(criteria_vector.size()) != spec.m()) {
    throw std::invalid_argument("criteria vector length does not match task '" + spec.task_id +
                                "'");
  }
  const int grade = encode_grade(criteria_vector);

  std::mt19937_64 rng(seed);
  Canvas canvas{cv::Mat(kPageHeight, kPageWidth, CV_8UC3, cv::Scalar::all(255)), {}, rng};
  const Style& style = spec.style;

  Scene scene;
  const double ox = canvas.uniform(60, 100);
  const double top = canvas.uniform(40, 70);
  scene.axis_height = canvas.uniform(220, 270);
  scene.axis_width = canvas.uniform(250, 310);
  scene.origin = {ox, top + scene.axis_height};
  const cv::Point2d origin = scene.origin;
  auto plot = [&](double u, double v) {
    return cv::Point2d(origin.x + u * scene.axis_width, origin.y - v * scene.axis_height);
  };

  // Resolve template bits into drawing decisions.
  ShiftDirection demand_shift = ShiftDirection::none;
  ShiftDirection supply_shift = ShiftDirection::none;
  bool labels = false;
  bool equilibrium = false;
  for (std::size_t i = 0; i < spec.criteria_templates.size(); ++i) {
    const auto& t = spec.criteria_templates[i];
    const bool bit = criteria_vector[i] == 1;
    switch (t.kind) {
      case TemplateKind::demand_shift: demand_shift = bit ? t.when_set : t.when_unset; break;
      case TemplateKind::supply_shift: supply_shift = bit ? t.when_set : t.when_unset; break;
      case TemplateKind::axes_labeled: labels = bit; break;
      case TemplateKind::equilibrium_marked: equilibrium = bit; break;
    }
  }

  const cv::Scalar axis_color = kInkPalette[0];
  const int axis_stroke = canvas.uniform_int(style.stroke_min, style.stroke_max);
  const cv::Point2d y_tip = origin + cv::Point2d(0, -scene.axis_height - 15);
  const cv::Point2d x_tip = origin + cv::Point2d(scene.axis_width + 15, 0);
  canvas.polyline(wobble(canvas, sample_line(origin, y_tip, kStrokeSamples), 0.5, 0.4),
                  axis_color, axis_stroke);
  canvas.polyline(wobble(canvas, sample_line(origin, x_tip, kStrokeSamples), 0.5, 0.4),
                  axis_color, axis_stroke);
  canvas.polyline({y_tip + cv::Point2d(-6, 10), y_tip, y_tip + cv::Point2d(6, 10)}, axis_color,
                  axis_stroke);
  canvas.polyline({x_tip + cv::Point2d(-10, -6), x_tip, x_tip + cv::Point2d(-10, 6)}, axis_color,
                  axis_stroke);

  auto draw_curve = [&](const std::string& role, CurveKind kind, double shift) {
    Scene::Curve curve;
    curve.role = role;
    curve.spec.kind = kind;
    curve.spec.slope_sign = kind == CurveKind::supply ? 1 : -1;
    curve.spec.shift_offset = shift;
    curve.spec.waviness_px = style.waviness_px;
    const double wiggle_u = canvas.uniform(-0.02, 0.02);
    const cv::Point2d a = kind == CurveKind::supply ? plot(0.15 + shift + wiggle_u, 0.1)
                                                    : plot(0.2 + shift + wiggle_u, 0.9);
    const cv::Point2d b = kind == CurveKind::supply ? plot(0.85 + shift + wiggle_u, 0.9)
                                                    : plot(0.8 + shift + wiggle_u, 0.1);
    curve.centerline = sample_line(a, b, kStrokeSamples);
    curve.stroke = wobble(canvas, curve.centerline, style.waviness_px, style.jitter_px * 0.25);
    for (auto& p : curve.stroke) p += cv::Point2d(canvas.gaussian(style.jitter_px * 0.5), 0.0);
    const cv::Scalar color =
        kInkPalette[static_cast<std::size_t>(canvas.uniform_int(0, static_cast<int>(kInkPalette.size()) - 1))];
    canvas.polyline(curve.stroke, color,
                    canvas.uniform_int(style.stroke_min, style.stroke_max));
    const std::string tag = kind == CurveKind::supply ? "A" : "N";
    const bool shifted = role.find("shifted") != std::string::npos;
    canvas.text(shifted ? tag + "'" : tag, kind == CurveKind::supply ? b + cv::Point2d(4, 4)
                                                                      : b + cv::Point2d(4, -4),
                0.5, color, true);
    scene.curves.push_back(std::move(curve));
  };

  const double offset = style.shift_offset;
  draw_curve("supply", CurveKind::supply, 0.0);
  draw_curve("demand", CurveKind::demand, 0.0);
  if (supply_shift != ShiftDirection::none) {
    draw_curve("supply_shifted", CurveKind::supply, direction_sign(supply_shift) * offset);
  }
  if (demand_shift != ShiftDirection::none) {
    draw_curve("demand_shifted", CurveKind::demand, direction_sign(demand_shift) * offset);
  }

  if (equilibrium) {
    const Scene::Curve* s = scene.find("supply_shifted");
    if (s == nullptr) s = scene.find("supply");
    const Scene::Curve* d = scene.find("demand_shifted");
    if (d == nullptr) d = scene.find("demand");
    auto point = intersect(s->centerline.front(), s->centerline.back(), d->centerline.front(),
                           d->centerline.back());
    if (!point) throw std::logic_error("supply and demand curves are parallel");
    scene.equilibrium_marker = *point;
    const cv::Scalar color = kInkPalette[0];
    for (double y = point->y; y < origin.y; y += 10) {
      canvas.polyline({{point->x, y}, {point->x, std::min(y + 5, origin.y)}}, color, 1);
    }
    for (double x = point->x; x > origin.x; x -= 10) {
      canvas.polyline({{x, point->y}, {std::max(x - 5, origin.x), point->y}}, color, 1);
    }
    cv::circle(canvas.image, cv::Point(static_cast<int>(point->x), static_cast<int>(point->y)), 4,
               color, cv::FILLED, cv::LINE_AA);
  }

  std::string text;
  if (labels) {
    scene.axis_labels_drawn = true;
    canvas.text("Preis", y_tip + cv::Point2d(10, 8), 0.55, axis_color, true);
    canvas.text("Menge", x_tip + cv::Point2d(-52, 24), 0.55, axis_color, true);
    text = "Preis Menge";
  }
  if (!spec.text_templates.empty()) {
    const auto& phrase = spec.text_templates[static_cast<std::size_t>(
        canvas.uniform_int(0, static_cast<int>(spec.text_templates.size()) - 1))];
    canvas.text(phrase, {origin.x - 30, origin.y + 62}, 0.6, kInkPalette[0], false);
    text = text.empty() ? phrase : text + " " + phrase;
  }
  scene.text = text;

  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
  for (const auto& p : canvas.extent) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const int pad = style.stroke_max;
  scene.graph_box = BoundingBox{static_cast<int>(std::floor(x0)) - pad,
                                static_cast<int>(std::floor(y0)) - pad,
                                static_cast<int>(std::ceil(x1 - x0)) + 2 * pad + 1,
                                static_cast<int>(std::ceil(y1 - y0)) + 2 * pad + 1};

  GeneratedSubmission out;
  out.image = canvas.image;
  out.text = text;
  out.annotation.criteria_vector = criteria_vector;
  out.annotation.grade = grade;
  out.annotation.annotator_id = "synthgen";
  out.scene = std::move(scene);
  return out;
}

}  // namespace graphgrade::synth
