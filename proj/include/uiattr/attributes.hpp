#pragma once

// Attribute space of the Button component: kinds, domains, distances,
// perceivable-difference classes, sampling and JSON records.

#include <array>
#include <bitset>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "uiattr/rng.hpp"

namespace uiattr {

enum class AttributeKind : std::uint8_t {
  kBorderColor,
  kBorderRadius,
  kBorderWidth,
  kMainColor,
  kPadding,
  kShadow,
  kTextColor,
  kTextFont,
  kTextGravity,
  kTextSize,
  kHeight,
  kWidth,
};

inline constexpr std::size_t kNumKinds = 12;

inline constexpr std::array<AttributeKind, kNumKinds> kAllKinds = {
    AttributeKind::kBorderColor, AttributeKind::kBorderRadius, AttributeKind::kBorderWidth,
    AttributeKind::kMainColor,   AttributeKind::kPadding,      AttributeKind::kShadow,
    AttributeKind::kTextColor,   AttributeKind::kTextFont,     AttributeKind::kTextGravity,
    AttributeKind::kTextSize,    AttributeKind::kHeight,       AttributeKind::kWidth,
};

constexpr std::size_t index_of(AttributeKind k) { return static_cast<std::size_t>(k); }

std::string_view kind_name(AttributeKind kind);
std::optional<AttributeKind> parse_kind(std::string_view name);

constexpr bool is_color(AttributeKind k) {
  return k == AttributeKind::kBorderColor || k == AttributeKind::kMainColor ||
         k == AttributeKind::kTextColor;
}
constexpr bool is_comparable(AttributeKind k) {
  return k != AttributeKind::kTextFont && k != AttributeKind::kTextGravity;
}

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  auto operator<=>(const Rgb&) const = default;
};

enum class TextFont : int { kThin, kLight, kRegular, kMedium, kBolt };
enum class TextGravity : int { kTop, kLeft, kCenter, kRight, kBottom };

std::string_view font_name(TextFont f);
std::string_view gravity_name(TextGravity g);

/// Internal code of the round-button border radius. It sits one step above the
/// largest finite radius so that the ordered domain is 0..20, inf.
inline constexpr int kRoundRadius = 21;

/// Integers carry sizes, sentinel codes and categorical indices; colors are Rgb.
using AttributeValue = std::variant<int, Rgb>;

/// Thrown when a value lies outside its attribute's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct AttributeConfig {
  Rgb border_color{0, 0, 0};
  int border_radius = 0;
  int border_width = 0;
  Rgb main_color{0, 0, 0};
  int padding = 0;
  int shadow = 0;
  Rgb text_color{0, 0, 0};
  TextFont text_font = TextFont::kThin;
  TextGravity text_gravity = TextGravity::kTop;
  int text_size = 0;
  int height = 20;
  int width = 25;

  AttributeValue get(AttributeKind kind) const;
  void set(AttributeKind kind, const AttributeValue& value);

  bool operator==(const AttributeConfig&) const = default;
};

/// Set of attribute kinds.
class KindSet {
 public:
  KindSet() = default;
  KindSet(std::initializer_list<AttributeKind> kinds) {
    for (auto k : kinds) insert(k);
  }
  static KindSet all() {
    KindSet s;
    s.bits_.set();
    return s;
  }

  void insert(AttributeKind k) { bits_.set(index_of(k)); }
  void erase(AttributeKind k) { bits_.reset(index_of(k)); }
  bool contains(AttributeKind k) const { return bits_.test(index_of(k)); }
  std::size_t size() const { return bits_.count(); }
  bool empty() const { return bits_.none(); }
  bool is_all() const { return bits_.all(); }
  std::vector<AttributeKind> kinds() const;
  bool operator==(const KindSet&) const = default;

 private:
  std::bitset<kNumKinds> bits_;
};

/// The six attributes adjusted by the refinement loop by default.
KindSet default_refinable_kinds();

// ----------------------------------------------------------------------------
// Domains

struct Domain {
  enum class Type { kRange, kRangeWithSentinel, kColor, kCategorical };
  Type type = Type::kRange;
  int lo = 0;
  int hi = 0;
  /// Extra member outside [lo, hi] (kRoundRadius for border_radius, 0 for text_size).
  std::optional<int> sentinel;
  /// Names of categorical members, indexed by code.
  std::vector<std::string_view> labels;
};

const Domain& domain(AttributeKind kind);

/// Ordered member codes of a non-color domain (ascending code order).
const std::vector<int>& domain_values(AttributeKind kind);

/// Position of `value` in domain_values(kind); throws DomainError when absent.
std::size_t value_index(AttributeKind kind, int value);

bool in_domain(AttributeKind kind, const AttributeValue& value);

struct Violation {
  AttributeKind kind;
  std::string message;
};

/// Every out-of-domain value of `config`; an empty list means valid.
std::vector<Violation> validate(const AttributeConfig& config);

/// Smallest and largest member codes (colors: per-channel 0..255).
int domain_min(AttributeKind kind);
int domain_max(AttributeKind kind);
/// Largest member code minus smallest; 1 for uncomparable kinds.
int domain_span(AttributeKind kind);

/// Maps an arbitrary integer onto the ordered domain of a numeric kind. Values
/// beyond the ends are clamped; a value between members goes to the nearer
/// member, and ties go in `direction` (sign of the attempted move).
int snap_to_domain(AttributeKind kind, int value, int direction);

// ----------------------------------------------------------------------------
// Distances and perceivable difference

double distance(AttributeKind kind, const AttributeValue& a, const AttributeValue& b);

enum class PerceivableClass : int { kSame = 0, kSimilar = 1, kDifferent = 2 };

std::string_view class_name(PerceivableClass c);

/// Thresholds on the distance epsilon: same iff eps <= same_max, similar iff
/// same_max < eps <= similar_max, otherwise different. Uncomparable kinds have
/// same_max = similar_max = 0.
struct PerceivableThresholds {
  double same_max;
  double similar_max;
};

PerceivableThresholds perceivable_thresholds(AttributeKind kind);

PerceivableClass perceivable_class(AttributeKind kind, const AttributeValue& a,
                                   const AttributeValue& b);

// ----------------------------------------------------------------------------
// Sampling

/// Per-kind integer bounds restricting where numeric values are drawn from.
/// Colors and categorical kinds always use their whole domain.
struct SamplingBounds {
  std::array<std::pair<int, int>, kNumKinds> range{};

  static SamplingBounds full();
  std::pair<int, int> of(AttributeKind k) const { return range[index_of(k)]; }
  void set(AttributeKind k, int lo, int hi) { range[index_of(k)] = {lo, hi}; }
  /// Domain members of `k` inside the bounds.
  std::vector<int> members(AttributeKind k) const;
};

/// Draws a uniform value for one kind within `bounds`.
AttributeValue sample_value(AttributeKind kind, Rng& rng,
                            const SamplingBounds& bounds = SamplingBounds::full());

/// Resamples `resample` uniformly and copies every other value from
/// `previous`. `previous` may be null only when `resample` is all kinds.
AttributeConfig sample_config(Rng& rng, const KindSet& resample, const AttributeConfig* previous,
                              const SamplingBounds& bounds = SamplingBounds::full());

/// Uniformly chosen subset of `size` kinds.
KindSet random_subset(Rng& rng, std::size_t size, const KindSet& from = KindSet::all());

// ----------------------------------------------------------------------------
// Serialization

nlohmann::json value_to_json(AttributeKind kind, const AttributeValue& v);
AttributeValue value_from_json(AttributeKind kind, const nlohmann::json& j);

nlohmann::json config_to_json(const AttributeConfig& c);
/// Parses a flat record; rejects missing/unknown keys and out-of-domain values.
AttributeConfig config_from_json(const nlohmann::json& j);

std::string value_to_string(AttributeKind kind, const AttributeValue& v);

/// Mid-domain configuration used as a neutral starting point in tests and demos.
/// Text is left-aligned so that padding moves it, and the height exceeds
/// twice the largest finite radius.
AttributeConfig canonical_config();

}  // namespace uiattr
