#include "uiattr/attributes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "uiattr/color.hpp"

namespace uiattr {
namespace {

constexpr std::array<std::string_view, kNumKinds> kKindNames = {
    "border_color", "border_radius", "border_width", "main_color", "padding",     "shadow",
    "text_color",   "text_font",     "text_gravity", "text_size",  "height",      "width",
};

constexpr std::array<std::string_view, 5> kFontNames = {"thin", "light", "regular", "medium",
                                                        "bolt"};
constexpr std::array<std::string_view, 5> kGravityNames = {"top", "left", "center", "right",
                                                           "bottom"};

const std::array<Domain, kNumKinds>& domains() {
  static const std::array<Domain, kNumKinds> table = [] {
    using T = Domain::Type;
    std::array<Domain, kNumKinds> d{};
    const Domain color{T::kColor, 0, 255, std::nullopt, {}};
    d[index_of(AttributeKind::kBorderColor)] = color;
    d[index_of(AttributeKind::kBorderRadius)] = {T::kRangeWithSentinel, 0, 20, kRoundRadius, {}};
    d[index_of(AttributeKind::kBorderWidth)] = {T::kRange, 0, 12, std::nullopt, {}};
    d[index_of(AttributeKind::kMainColor)] = color;
    d[index_of(AttributeKind::kPadding)] = {T::kRange, 0, 43, std::nullopt, {}};
    d[index_of(AttributeKind::kShadow)] = {T::kRange, 0, 12, std::nullopt, {}};
    d[index_of(AttributeKind::kTextColor)] = color;
    d[index_of(AttributeKind::kTextFont)] = {
        T::kCategorical, 0, 4, std::nullopt, {kFontNames.begin(), kFontNames.end()}};
    d[index_of(AttributeKind::kTextGravity)] = {
        T::kCategorical, 0, 4, std::nullopt, {kGravityNames.begin(), kGravityNames.end()}};
    d[index_of(AttributeKind::kTextSize)] = {T::kRangeWithSentinel, 10, 30, 0, {}};
    d[index_of(AttributeKind::kHeight)] = {T::kRange, 20, 60, std::nullopt, {}};
    d[index_of(AttributeKind::kWidth)] = {T::kRange, 25, 275, std::nullopt, {}};
    return d;
  }();
  return table;
}

const std::array<std::vector<int>, kNumKinds>& member_table() {
  static const std::array<std::vector<int>, kNumKinds> table = [] {
    std::array<std::vector<int>, kNumKinds> t{};
    for (auto k : kAllKinds) {
      const Domain& d = domains()[index_of(k)];
      if (d.type == Domain::Type::kColor) continue;
      std::vector<int> v;
      for (int x = d.lo; x <= d.hi; ++x) v.push_back(x);
      if (d.sentinel) v.push_back(*d.sentinel);
      std::sort(v.begin(), v.end());
      t[index_of(k)] = std::move(v);
    }
    return t;
  }();
  return table;
}

int as_int(AttributeKind kind, const AttributeValue& v) {
  if (const int* p = std::get_if<int>(&v)) return *p;
  throw DomainError(std::string(kind_name(kind)) + ": expected an integer value");
}

Rgb as_rgb(AttributeKind kind, const AttributeValue& v) {
  if (const Rgb* p = std::get_if<Rgb>(&v)) return *p;
  throw DomainError(std::string(kind_name(kind)) + ": expected a color value");
}

void require_domain(AttributeKind kind, const AttributeValue& v) {
  if (!in_domain(kind, v)) {
    throw DomainError(std::string(kind_name(kind)) + ": value " + value_to_string(kind, v) +
                      " outside domain");
  }
}

}  // namespace

std::string_view kind_name(AttributeKind kind) { return kKindNames[index_of(kind)]; }

std::optional<AttributeKind> parse_kind(std::string_view name) {
  for (auto k : kAllKinds) {
    if (kKindNames[index_of(k)] == name) return k;
  }
  return std::nullopt;
}

std::string_view font_name(TextFont f) { return kFontNames[static_cast<int>(f)]; }
std::string_view gravity_name(TextGravity g) { return kGravityNames[static_cast<int>(g)]; }

AttributeValue AttributeConfig::get(AttributeKind kind) const {
  switch (kind) {
    case AttributeKind::kBorderColor: return border_color;
    case AttributeKind::kBorderRadius: return border_radius;
    case AttributeKind::kBorderWidth: return border_width;
    case AttributeKind::kMainColor: return main_color;
    case AttributeKind::kPadding: return padding;
    case AttributeKind::kShadow: return shadow;
    case AttributeKind::kTextColor: return text_color;
    case AttributeKind::kTextFont: return static_cast<int>(text_font);
    case AttributeKind::kTextGravity: return static_cast<int>(text_gravity);
    case AttributeKind::kTextSize: return text_size;
    case AttributeKind::kHeight: return height;
    case AttributeKind::kWidth: return width;
  }
  throw std::logic_error("unknown attribute kind");
}

void AttributeConfig::set(AttributeKind kind, const AttributeValue& value) {
  switch (kind) {
    case AttributeKind::kBorderColor: border_color = as_rgb(kind, value); return;
    case AttributeKind::kBorderRadius: border_radius = as_int(kind, value); return;
    case AttributeKind::kBorderWidth: border_width = as_int(kind, value); return;
    case AttributeKind::kMainColor: main_color = as_rgb(kind, value); return;
    case AttributeKind::kPadding: padding = as_int(kind, value); return;
    case AttributeKind::kShadow: shadow = as_int(kind, value); return;
    case AttributeKind::kTextColor: text_color = as_rgb(kind, value); return;
    case AttributeKind::kTextFont: text_font = static_cast<TextFont>(as_int(kind, value)); return;
    case AttributeKind::kTextGravity:
      text_gravity = static_cast<TextGravity>(as_int(kind, value));
      return;
    case AttributeKind::kTextSize: text_size = as_int(kind, value); return;
    case AttributeKind::kHeight: height = as_int(kind, value); return;
    case AttributeKind::kWidth: width = as_int(kind, value); return;
  }
}

std::vector<AttributeKind> KindSet::kinds() const {
  std::vector<AttributeKind> out;
  for (auto k : kAllKinds) {
    if (contains(k)) out.push_back(k);
  }
  return out;
}

KindSet default_refinable_kinds() {
  return {AttributeKind::kTextSize, AttributeKind::kTextGravity, AttributeKind::kTextFont,
          AttributeKind::kShadow, AttributeKind::kWidth, AttributeKind::kHeight};
}

const Domain& domain(AttributeKind kind) { return domains()[index_of(kind)]; }

const std::vector<int>& domain_values(AttributeKind kind) {
  if (is_color(kind)) throw DomainError("color domains are not enumerated");
  return member_table()[index_of(kind)];
}

std::size_t value_index(AttributeKind kind, int value) {
  const auto& v = domain_values(kind);
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) {
    throw DomainError(std::string(kind_name(kind)) + ": " + std::to_string(value) +
                      " is not a domain member");
  }
  return static_cast<std::size_t>(it - v.begin());
}

bool in_domain(AttributeKind kind, const AttributeValue& value) {
  if (is_color(kind)) return std::holds_alternative<Rgb>(value);
  const int* p = std::get_if<int>(&value);
  if (p == nullptr) return false;
  const Domain& d = domain(kind);
  return (*p >= d.lo && *p <= d.hi) || (d.sentinel && *p == *d.sentinel);
}

std::vector<Violation> validate(const AttributeConfig& config) {
  std::vector<Violation> out;
  for (auto k : kAllKinds) {
    const auto v = config.get(k);
    if (!in_domain(k, v)) {
      out.push_back({k, std::string(kind_name(k)) + " = " + value_to_string(k, v) +
                            " outside domain"});
    }
  }
  return out;
}

int domain_min(AttributeKind kind) {
  if (is_color(kind)) return 0;
  return domain_values(kind).front();
}

int domain_max(AttributeKind kind) {
  if (is_color(kind)) return 255;
  return domain_values(kind).back();
}

int domain_span(AttributeKind kind) {
  if (!is_comparable(kind)) return 1;
  return domain_max(kind) - domain_min(kind);
}

int snap_to_domain(AttributeKind kind, int value, int direction) {
  if (is_color(kind)) return std::clamp(value, 0, 255);
  const auto& v = domain_values(kind);
  if (value <= v.front()) return v.front();
  if (value >= v.back()) return v.back();
  auto upper = std::lower_bound(v.begin(), v.end(), value);
  if (*upper == value) return value;
  const int hi = *upper;
  const int lo = *(upper - 1);
  if (value - lo < hi - value) return lo;
  if (hi - value < value - lo) return hi;
  return direction < 0 ? lo : hi;
}

double distance(AttributeKind kind, const AttributeValue& a, const AttributeValue& b) {
  require_domain(kind, a);
  require_domain(kind, b);
  if (is_color(kind)) return delta_e76(as_rgb(kind, a), as_rgb(kind, b));
  const int x = as_int(kind, a);
  const int y = as_int(kind, b);
  if (!is_comparable(kind)) return x == y ? 0.0 : 1.0;
  if (kind == AttributeKind::kBorderRadius && (x == kRoundRadius || y == kRoundRadius)) {
    return x == y ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return std::abs(static_cast<double>(x) - static_cast<double>(y));
}

std::string_view class_name(PerceivableClass c) {
  switch (c) {
    case PerceivableClass::kSame: return "same";
    case PerceivableClass::kSimilar: return "similar";
    case PerceivableClass::kDifferent: return "different";
  }
  return "?";
}

PerceivableThresholds perceivable_thresholds(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::kBorderColor:
    case AttributeKind::kMainColor:
    case AttributeKind::kTextColor: return {5.0, 10.0};
    case AttributeKind::kBorderRadius:
    case AttributeKind::kPadding:
    case AttributeKind::kHeight: return {1.0, 3.0};
    case AttributeKind::kBorderWidth: return {0.0, 1.0};
    case AttributeKind::kShadow: return {0.0, 2.0};
    case AttributeKind::kTextSize: return {1.0, 2.0};
    case AttributeKind::kWidth: return {2.0, 4.0};
    case AttributeKind::kTextFont:
    case AttributeKind::kTextGravity: return {0.0, 0.0};
  }
  throw std::logic_error("unknown attribute kind");
}

PerceivableClass perceivable_class(AttributeKind kind, const AttributeValue& a,
                                   const AttributeValue& b) {
  const double eps = distance(kind, a, b);
  const auto t = perceivable_thresholds(kind);
  if (eps <= t.same_max) return PerceivableClass::kSame;
  if (is_comparable(kind) && eps <= t.similar_max) return PerceivableClass::kSimilar;
  return PerceivableClass::kDifferent;
}

SamplingBounds SamplingBounds::full() {
  SamplingBounds b;
  for (auto k : kAllKinds) b.set(k, domain_min(k), domain_max(k));
  return b;
}

std::vector<int> SamplingBounds::members(AttributeKind k) const {
  std::vector<int> out;
  const auto [lo, hi] = of(k);
  for (int v : domain_values(k)) {
    if (v >= lo && v <= hi) out.push_back(v);
  }
  if (out.empty()) {
    throw DomainError(std::string(kind_name(k)) + ": sampling bounds exclude every member");
  }
  return out;
}

AttributeValue sample_value(AttributeKind kind, Rng& rng, const SamplingBounds& bounds) {
  if (is_color(kind)) {
    Rgb c;
    c.r = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    c.g = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    c.b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return c;
  }
  const auto members = bounds.members(kind);
  return members[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1))];
}

AttributeConfig sample_config(Rng& rng, const KindSet& resample, const AttributeConfig* previous,
                              const SamplingBounds& bounds) {
  if (previous == nullptr && !resample.is_all()) {
    throw std::invalid_argument("sample_config: a previous config is required for partial resampling");
  }
  AttributeConfig out = previous != nullptr ? *previous : AttributeConfig{};
  for (auto k : kAllKinds) {
    if (resample.contains(k)) out.set(k, sample_value(k, rng, bounds));
  }
  return out;
}

KindSet random_subset(Rng& rng, std::size_t size, const KindSet& from) {
  auto pool = from.kinds();
  if (size > pool.size()) throw std::invalid_argument("random_subset: size exceeds pool");
  rng.shuffle(pool);
  KindSet out;
  for (std::size_t i = 0; i < size; ++i) out.insert(pool[i]);
  return out;
}

nlohmann::json value_to_json(AttributeKind kind, const AttributeValue& v) {
  if (is_color(kind)) {
    const Rgb c = as_rgb(kind, v);
    return nlohmann::json::array({c.r, c.g, c.b});
  }
  const int x = as_int(kind, v);
  if (kind == AttributeKind::kTextFont) return std::string(font_name(static_cast<TextFont>(x)));
  if (kind == AttributeKind::kTextGravity) {
    return std::string(gravity_name(static_cast<TextGravity>(x)));
  }
  if (kind == AttributeKind::kBorderRadius && x == kRoundRadius) return "inf";
  return x;
}

AttributeValue value_from_json(AttributeKind kind, const nlohmann::json& j) {
  const std::string name(kind_name(kind));
  AttributeValue v;
  if (is_color(kind)) {
    if (!j.is_array() || j.size() != 3) throw DomainError(name + ": expected [r,g,b]");
    int ch[3];
    for (int i = 0; i < 3; ++i) {
      if (!j[i].is_number_integer()) throw DomainError(name + ": channels must be integers");
      ch[i] = j[i].get<int>();
      if (ch[i] < 0 || ch[i] > 255) throw DomainError(name + ": channel outside [0,255]");
    }
    v = Rgb{static_cast<std::uint8_t>(ch[0]), static_cast<std::uint8_t>(ch[1]),
            static_cast<std::uint8_t>(ch[2])};
  } else if (!is_comparable(kind)) {
    if (!j.is_string()) throw DomainError(name + ": expected a name");
    const auto& labels = domain(kind).labels;
    auto it = std::find(labels.begin(), labels.end(), j.get<std::string>());
    if (it == labels.end()) throw DomainError(name + ": unknown value " + j.get<std::string>());
    v = static_cast<int>(it - labels.begin());
  } else if (kind == AttributeKind::kBorderRadius && j.is_string()) {
    if (j.get<std::string>() != "inf") throw DomainError(name + ": only \"inf\" allowed as text");
    v = kRoundRadius;
  } else {
    if (!j.is_number_integer()) throw DomainError(name + ": expected an integer");
    v = j.get<int>();
  }
  require_domain(kind, v);
  return v;
}

nlohmann::json config_to_json(const AttributeConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (auto k : kAllKinds) j[std::string(kind_name(k))] = value_to_json(k, c.get(k));
  return j;
}

AttributeConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DomainError("attribute record must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!parse_kind(key)) throw DomainError("unknown attribute key: " + key);
  }
  AttributeConfig c;
  for (auto k : kAllKinds) {
    const std::string key(kind_name(k));
    if (!j.contains(key)) throw DomainError("missing attribute key: " + key);
    c.set(k, value_from_json(k, j.at(key)));
  }
  return c;
}

std::string value_to_string(AttributeKind kind, const AttributeValue& v) {
  if (const Rgb* c = std::get_if<Rgb>(&v)) {
    return "(" + std::to_string(c->r) + "," + std::to_string(c->g) + "," + std::to_string(c->b) +
           ")";
  }
  const int x = std::get<int>(v);
  if (kind == AttributeKind::kTextFont && x >= 0 && x < 5) return std::string(kFontNames[x]);
  if (kind == AttributeKind::kTextGravity && x >= 0 && x < 5) return std::string(kGravityNames[x]);
  if (kind == AttributeKind::kBorderRadius && x == kRoundRadius) return "inf";
  return std::to_string(x);
}

AttributeConfig canonical_config() {
  AttributeConfig c;
  c.border_color = {40, 40, 160};
  c.border_radius = 4;
  c.border_width = 2;
  c.main_color = {230, 200, 60};
  c.padding = 2;
  c.shadow = 2;
  c.text_color = {20, 20, 20};
  c.text_font = TextFont::kRegular;
  c.text_gravity = TextGravity::kLeft;
  c.text_size = 14;
  c.height = 44;
  c.width = 80;
  return c;
}

}  // namespace uiattr
