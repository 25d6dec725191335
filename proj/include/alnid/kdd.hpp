#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "alnid/errors.hpp"
#include "alnid/stats.hpp"

namespace alnid::kdd {

// ---------------------------------------------------------------------------
// Attack categories and the experiment class table
// ---------------------------------------------------------------------------

enum class Category : std::uint8_t { kDos = 0, kNormal, kProbe, kR2l, kU2r };

inline constexpr std::size_t kNumCategories = 5;

constexpr std::string_view category_name(Category c) {
  switch (c) {
    case Category::kDos: return "DOS";
    case Category::kNormal: return "NORMAL";
    case Category::kProbe: return "PROBE";
    case Category::kR2l: return "R2L";
    case Category::kU2r: return "U2R";
  }
  return "?";
}

inline Category category_from_name(std::string_view name) {
  for (std::uint8_t i = 0; i < kNumCategories; ++i) {
    auto c = static_cast<Category>(i);
    if (category_name(c) == name) return c;
  }
  throw Error("unknown category name: " + std::string(name));
}

struct ClassEntry {
  std::string name;
  Category category;
  bool zero_shot;               // held out of training entirely
  std::int64_t expected_count;  // census in the canonical 10% subset
};

/// The experiment's class setup: 23 attack/normal classes, their categories,
/// which classes are withheld as zero-shot, and the expected census of the
/// canonical 10% subset. Entries are kept sorted by class name.
class ClassTable {
 public:
  explicit ClassTable(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw Error("class table: no entries");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].name, i).second)
        throw Error("class table: duplicate class " + entries_[i].name);
    }
  }

  /// The canonical setup. Note: the widely circulated summary table prints
  /// the `normal` census as 97,277, which cannot sum to the subset's 494,021
  /// records; the canonical count is 97,278 and that is what is used here.
  static const ClassTable& canonical() {
    static const ClassTable table{std::vector<ClassEntry>{
        {"back", Category::kDos, false, 2203},
        {"buffer_overflow", Category::kU2r, false, 30},
        {"ftp_write", Category::kR2l, false, 8},
        {"guess_passwd", Category::kR2l, true, 53},
        {"imap", Category::kR2l, true, 12},
        {"ipsweep", Category::kProbe, true, 1247},
        {"land", Category::kDos, true, 21},
        {"loadmodule", Category::kU2r, false, 9},
        {"multihop", Category::kR2l, false, 7},
        {"neptune", Category::kDos, false, 107201},
        {"nmap", Category::kProbe, true, 231},
        {"normal", Category::kNormal, false, 97278},
        {"perl", Category::kU2r, true, 3},
        {"phf", Category::kR2l, false, 4},
        {"pod", Category::kDos, false, 264},
        {"portsweep", Category::kProbe, false, 1040},
        {"rootkit", Category::kU2r, true, 10},
        {"satan", Category::kProbe, false, 1589},
        {"smurf", Category::kDos, false, 280790},
        {"spy", Category::kR2l, false, 2},
        {"teardrop", Category::kDos, true, 979},
        {"warezclient", Category::kR2l, false, 1020},
        {"warezmaster", Category::kR2l, false, 20},
    }};
    return table;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const ClassEntry& entry(std::size_t id) const { return entries_.at(id); }
  std::span<const ClassEntry> entries() const noexcept { return entries_; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::int64_t expected_total() const {
    std::int64_t t = 0;
    for (const auto& e : entries_) t += e.expected_count;
    return t;
  }

  std::size_t zero_shot_count() const {
    std::size_t t = 0;
    for (const auto& e : entries_)
      if (e.zero_shot) ++t;
    return t;
  }

 private:
  std::vector<ClassEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// ---------------------------------------------------------------------------
// Records and instances
// ---------------------------------------------------------------------------

inline constexpr int kRawFieldCount = 42;  // 41 attributes + label

/// Raw fields of symbolic type (protocol_type, service, flag); everything
/// else must parse as a finite non-negative number.
inline constexpr std::array<int, 3> kSymbolicFields{1, 2, 3};

/// One split connection record. The views point into the caller's line
/// buffer and are only valid while that buffer lives.
struct RawConnectionRecord {
  std::array<std::string_view, 41> fields;
  std::string_view label;  // trailing period stripped
  std::size_t line = 0;    // 1-based source line, 0 when unknown
};

inline constexpr std::size_t kNumAttributes = 12;

/// The 12 selected attributes, in fixed feature order.
inline constexpr std::array<std::string_view, kNumAttributes> kAttributeNames{
    "duration",
    "protocol_type",
    "src_bytes",
    "dst_bytes",
    "urgent",
    "count",
    "srv_count",
    "same_srv_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_same_src_port_rate",
};

/// Position of each selected attribute among the 41 raw fields.
inline constexpr std::array<int, kNumAttributes> kRawFieldIndex{0,  1,  4,  5,  8,  22,
                                                                23, 28, 31, 32, 33, 35};

/// Attributes whose values are rates in [0,1].
inline constexpr std::array<bool, kNumAttributes> kIsRate{false, false, false, false,
                                                          false, false, false, true,
                                                          false, false, true,  true};

struct EncodedInstance {
  std::array<double, kNumAttributes> features;
  std::uint8_t class_id;  // index into the ClassTable
  Category category;
};

struct DatasetSplit {
  std::vector<EncodedInstance> seen;    // classes available at training time
  std::vector<EncodedInstance> unseen;  // zero-shot classes
};

// ---------------------------------------------------------------------------
// Parsing and encoding
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_nonneg_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) return false;
  return std::isfinite(out) && out >= 0.0;
}

}  // namespace detail

/// Split one connection record. Validates the field count, that every
/// non-symbolic field is a finite non-negative number, and that the label
/// (after stripping the trailing period) is a known class.
inline RawConnectionRecord parse_kdd_line(std::string_view line, std::size_t line_no = 0,
                                          const ClassTable& table = ClassTable::canonical()) {
  if (line.empty()) throw ParseError("empty record", line_no);
  RawConnectionRecord rec;
  rec.line = line_no;

  int field = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const bool last = comma == std::string_view::npos;
    const std::string_view token =
        last ? line.substr(start) : line.substr(start, comma - start);
    if (field >= kRawFieldCount)
      throw ParseError("too many fields (expected 42)", line_no, field);
    if (field < kRawFieldCount - 1) {
      rec.fields[static_cast<std::size_t>(field)] = token;
    } else {
      std::string_view label = token;
      if (!label.empty() && label.back() == '.') label.remove_suffix(1);
      rec.label = label;
    }
    ++field;
    if (last) break;
    start = comma + 1;
  }
  if (field != kRawFieldCount)
    throw ParseError("wrong field count (expected 42, got " + std::to_string(field) + ")",
                     line_no, field - 1);

  for (int i = 0; i < kRawFieldCount - 1; ++i) {
    if (i == kSymbolicFields[0] || i == kSymbolicFields[1] || i == kSymbolicFields[2])
      continue;
    double v;
    if (!detail::parse_nonneg_number(rec.fields[static_cast<std::size_t>(i)], v))
      throw ParseError("field is not a finite non-negative number: '" +
                           std::string(rec.fields[static_cast<std::size_t>(i)]) + "'",
                       line_no, i);
  }
  if (!table.find(rec.label))
    throw ParseError("unknown label '" + std::string(rec.label) + "'", line_no,
                     kRawFieldCount - 1);
  return rec;
}

/// protocol_type encoding: alphabetical index starting at 1.
inline double encode_protocol(std::string_view proto, std::size_t line_no = 0) {
  if (proto == "icmp") return 1.0;
  if (proto == "tcp") return 2.0;
  if (proto == "udp") return 3.0;
  throw ParseError("unknown protocol '" + std::string(proto) + "'", line_no, 1);
}

/// Extract the 12 selected attributes in fixed order and attach the class
/// and category labels.
inline EncodedInstance encode_instance(const RawConnectionRecord& rec,
                                       const ClassTable& table = ClassTable::canonical()) {
  EncodedInstance inst{};
  for (std::size_t a = 0; a < kNumAttributes; ++a) {
    const int raw = kRawFieldIndex[a];
    const std::string_view token = rec.fields[static_cast<std::size_t>(raw)];
    double v;
    if (raw == 1) {
      v = encode_protocol(token, rec.line);
    } else if (!detail::parse_nonneg_number(token, v)) {
      throw ParseError("field is not a finite non-negative number: '" + std::string(token) + "'",
                       rec.line, raw);
    }
    if (kIsRate[a] && v > 1.0)
      throw ParseError("rate attribute out of [0,1]: " + std::string(kAttributeNames[a]),
                       rec.line, raw);
    inst.features[a] = v;
  }
  const auto id = table.find(rec.label);
  if (!id) throw ParseError("unknown label '" + std::string(rec.label) + "'", rec.line, 41);
  inst.class_id = static_cast<std::uint8_t>(*id);
  inst.category = table.entry(*id).category;
  return inst;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

/// Invokes fn(line, line_no) for every newline-terminated record; blank
/// lines are skipped. The reader is gzip-transparent (plain text passes
/// through unchanged).
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw Error("cannot open " + path.string());
  gzbuffer(file, 1 << 20);

  std::vector<char> chunk(1 << 20);
  std::string carry;
  std::size_t line_no = 0;
  while (true) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int errnum = 0;
      const char* msg = gzerror(file, &errnum);
      std::string text = msg ? msg : "read error";
      gzclose(file);
      throw Error("error reading " + path.string() + ": " + text);
    }
    if (n == 0) break;
    std::size_t begin = 0;
    const std::string_view block(chunk.data(), static_cast<std::size_t>(n));
    while (true) {
      const std::size_t nl = block.find('\n', begin);
      if (nl == std::string_view::npos) {
        carry.append(block.substr(begin));
        break;
      }
      ++line_no;
      std::string_view line;
      if (carry.empty()) {
        line = block.substr(begin, nl - begin);
      } else {
        carry.append(block.substr(begin, nl - begin));
        line = carry;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) fn(line, line_no);
      carry.clear();
      begin = nl + 1;
    }
  }
  gzclose(file);
  if (!carry.empty()) {
    ++line_no;
    std::string_view line = carry;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) fn(line, line_no);
  }
}

}  // namespace detail

/// Streaming parse of a whole file (plain or gzip). Record order is
/// preserved; any malformed record aborts the load with context.
inline std::vector<EncodedInstance> load_dataset(const std::filesystem::path& path,
                                                 const ClassTable& table = ClassTable::canonical()) {
  std::vector<EncodedInstance> out;
  detail::for_each_line(path, [&](std::string_view line, std::size_t line_no) {
    out.push_back(encode_instance(parse_kdd_line(line, line_no, table), table));
  });
  return out;
}

/// Same contract over an already-open text stream.
inline std::vector<EncodedInstance> load_dataset(std::istream& in,
                                                 const ClassTable& table = ClassTable::canonical()) {
  std::vector<EncodedInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty()) continue;
    out.push_back(encode_instance(parse_kdd_line(view, line_no, table), table));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split, census, statistics, subsampling
// ---------------------------------------------------------------------------

/// Instances of zero-shot classes go to `unseen`, everything else to `seen`.
inline DatasetSplit split_zero_shot(std::span<const EncodedInstance> dataset,
                                    const ClassTable& table = ClassTable::canonical()) {
  DatasetSplit split;
  for (const auto& inst : dataset) {
    if (inst.class_id >= table.size())
      throw Error("split: instance class id " + std::to_string(inst.class_id) +
                  " not in the class table");
    if (table.entry(inst.class_id).zero_shot)
      split.unseen.push_back(inst);
    else
      split.seen.push_back(inst);
  }
  return split;
}

/// Per-class instance counts, indexed by class id.
inline std::vector<std::int64_t> census(std::span<const EncodedInstance> dataset,
                                        const ClassTable& table = ClassTable::canonical()) {
  std::vector<std::int64_t> counts(table.size(), 0);
  for (const auto& inst : dataset) {
    if (inst.class_id >= table.size())
      throw Error("census: instance class id out of range");
    ++counts[inst.class_id];
  }
  return counts;
}

struct CensusMismatch {
  std::string class_name;
  std::int64_t expected;
  std::int64_t actual;
};

inline std::vector<CensusMismatch> census_mismatches(
    std::span<const std::int64_t> counts, const ClassTable& table = ClassTable::canonical()) {
  std::vector<CensusMismatch> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& e = table.entry(i);
    const std::int64_t actual = i < counts.size() ? counts[i] : 0;
    if (actual != e.expected_count) out.push_back({e.name, e.expected_count, actual});
  }
  return out;
}

/// Population statistics of one attribute over the dataset.
inline Stats attribute_stats(std::span<const EncodedInstance> dataset, std::size_t attribute) {
  if (attribute >= kNumAttributes) throw Error("attribute_stats: index out of range");
  if (dataset.empty()) throw Error("attribute_stats: empty dataset");
  StatsAccumulator acc;
  for (const auto& inst : dataset) acc.add(inst.features[attribute]);
  return acc.finish();
}

namespace detail {

/// Deterministic uniform integer draw in [0, n); identical across platforms
/// (std::uniform_int_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace detail

/// Proportional per-class subsample of about `target` instances with at
/// least one instance per class present in the input. Output preserves the
/// original instance order; a fixed seed yields an identical subsample on
/// every platform.
inline std::vector<EncodedInstance> stratified_subsample(
    std::span<const EncodedInstance> dataset, std::size_t target, std::uint64_t seed,
    const ClassTable& table = ClassTable::canonical()) {
  if (target == 0 || dataset.size() <= target)
    return {dataset.begin(), dataset.end()};

  std::vector<std::vector<std::uint32_t>> by_class(table.size());
  for (std::uint32_t i = 0; i < dataset.size(); ++i)
    by_class[dataset[i].class_id].push_back(i);

  detail::Rng rng(seed);
  std::vector<std::uint32_t> chosen;
  chosen.reserve(target + table.size());
  const double scale = static_cast<double>(target) / static_cast<double>(dataset.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    auto want = static_cast<std::size_t>(
        std::llround(static_cast<double>(idx.size()) * scale));
    want = std::max<std::size_t>(want, 1);
    want = std::min(want, idx.size());
    // partial Fisher-Yates: the first `want` slots become the sample
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<EncodedInstance> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(dataset[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Reference statistics of the canonical 10% subset
// ---------------------------------------------------------------------------

/// Published reference row for one attribute. `max_flagged` marks a value
/// with a known misprint in the reference (dst_bytes max); `moments_flagged`
/// marks mean/stddev values that depend on a symbolic-encoding convention
/// other than the alphabetical one used here (protocol_type). Flagged values
/// are reported on mismatch instead of hard-failing.
struct ReferenceStats {
  std::string_view attribute;
  double min;
  double max;
  double mean;
  double stddev;
  bool max_flagged;
  bool moments_flagged;
};

inline constexpr std::array<ReferenceStats, kNumAttributes> kReferenceStats{{
    {"duration", 0, 58329, 47.979, 707.747, false, false},
    {"protocol_type", 1, 3, 2.189, 0.961, false, true},
    {"src_bytes", 0, 693375640, 3025.616, 988219.101, false, false},
    {"dst_bytes", 0, 5155468, 868.531, 33040.035, true, false},
    {"urgent", 0, 3, 0, 0.006, false, false},
    {"count", 0, 511, 332.286, 213.147, false, false},
    {"srv_count", 0, 511, 292.907, 246.323, false, false},
    {"same_srv_rate", 0, 1, 0.792, 0.388, false, false},
    {"dst_host_count", 0, 255, 232.471, 64.745, false, false},
    {"dst_host_srv_count", 0, 255, 188.666, 106.04, false, false},
    {"dst_host_same_srv_rate", 0, 1, 0.754, 0.411, false, false},
    {"dst_host_same_src_port_rate", 0, 1, 0.602, 0.481, false, false},
}};

}  // namespace alnid::kdd
