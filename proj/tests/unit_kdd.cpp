#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include <zlib.h>

#include <catch2/catch_amalgamated.hpp>

#include "alnid/kdd.hpp"
#include "support/oracles.hpp"
#include "support/synthetic_kdd.hpp"

namespace kdd = alnid::kdd;
using alnid::ParseError;

namespace {

/// A well-formed 42-field line with the 12 selected attributes set.
std::string sample_line(const std::string& label, const std::string& proto = "tcp") {
  std::vector<std::string> fields(42, "0");
  fields[1] = proto;
  fields[2] = "http";
  fields[3] = "SF";
  fields[0] = "2";      // duration
  fields[4] = "181";    // src_bytes
  fields[5] = "5450";   // dst_bytes
  fields[8] = "0";      // urgent
  fields[22] = "8";     // count
  fields[23] = "8";     // srv_count
  fields[28] = "1.00";  // same_srv_rate
  fields[31] = "9";     // dst_host_count
  fields[32] = "9";     // dst_host_srv_count
  fields[33] = "1.00";  // dst_host_same_srv_rate
  fields[35] = "0.11";  // dst_host_same_src_port_rate
  fields[41] = label;
  std::string line = fields[0];
  for (std::size_t i = 1; i < fields.size(); ++i) line += "," + fields[i];
  return line;
}

}  // namespace

TEST_CASE("canonical class table invariants") {
  const auto& table = kdd::ClassTable::canonical();
  CHECK(table.size() == 23);
  CHECK(table.zero_shot_count() == 8);
  CHECK(table.expected_total() == 494021);

  for (const char* name : {"teardrop", "land", "ipsweep", "nmap", "guess_passwd", "imap",
                           "rootkit", "perl"}) {
    auto id = table.find(name);
    REQUIRE(id.has_value());
    CHECK(table.entry(*id).zero_shot);
  }
  auto smurf = table.find("smurf");
  REQUIRE(smurf.has_value());
  CHECK(table.entry(*smurf).expected_count == 280790);
  CHECK_FALSE(table.entry(*smurf).zero_shot);
  CHECK(table.entry(*table.find("neptune")).expected_count == 107201);
  CHECK(table.entry(*table.find("normal")).expected_count == 97278);

  // every class maps to exactly one category
  for (const auto& e : table.entries())
    CHECK_NOTHROW(kdd::category_from_name(std::string(kdd::category_name(e.category))));
}

TEST_CASE("parse_kdd_line happy path") {
  const std::string line = sample_line("normal.");  // views point into this buffer
  const auto rec = kdd::parse_kdd_line(line, 1);
  CHECK(rec.label == "normal");
  CHECK(rec.fields[1] == "tcp");
  const auto inst = kdd::encode_instance(rec);
  CHECK(inst.category == kdd::Category::kNormal);
  CHECK(kdd::ClassTable::canonical().entry(inst.class_id).name == "normal");
  CHECK(inst.features[0] == 2.0);
  CHECK(inst.features[2] == 181.0);
  CHECK(inst.features[7] == 1.0);
}

TEST_CASE("parse_kdd_line error paths") {
  // 41 fields
  std::string short_line = sample_line("normal.");
  short_line.erase(0, short_line.find(',') + 1);
  try {
    kdd::parse_kdd_line(short_line, 7);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }

  // unknown label
  CHECK_THROWS_AS(kdd::parse_kdd_line(sample_line("zergrush."), 1), ParseError);

  // non-numeric numeric field
  std::string bad = sample_line("normal.");
  bad.replace(0, 1, "x");
  try {
    kdd::parse_kdd_line(bad, 3);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.field() == 0);
  }

  // negative numeric field
  CHECK_THROWS_AS(kdd::parse_kdd_line("-1" + sample_line("normal.").substr(1), 1), ParseError);

  CHECK_THROWS_AS(kdd::parse_kdd_line("", 1), ParseError);
}

TEST_CASE("protocol encoding is alphabetical") {
  CHECK(kdd::encode_protocol("icmp") == 1.0);
  CHECK(kdd::encode_protocol("tcp") == 2.0);
  CHECK(kdd::encode_protocol("udp") == 3.0);
  CHECK_THROWS_AS(kdd::encode_protocol("sctp"), ParseError);

  const auto smurf = kdd::encode_instance(kdd::parse_kdd_line(sample_line("smurf.", "icmp"), 1));
  CHECK(smurf.features[1] == 1.0);
  const auto udp = kdd::encode_instance(kdd::parse_kdd_line(sample_line("normal.", "udp"), 1));
  CHECK(udp.features[1] == 3.0);
}

TEST_CASE("encode_instance validates rates and zero passthrough") {
  std::vector<std::string> fields(42, "0");
  fields[1] = "tcp";
  fields[2] = "http";
  fields[3] = "SF";
  fields[41] = "normal.";
  std::string line = fields[0];
  for (std::size_t i = 1; i < fields.size(); ++i) line += "," + fields[i];
  const auto inst = kdd::encode_instance(kdd::parse_kdd_line(line, 1));
  for (std::size_t a = 0; a < kdd::kNumAttributes; ++a)
    if (a != 1) CHECK(inst.features[a] == 0.0);

  std::string bad_rate = sample_line("normal.");
  const auto pos = [&] {  // replace field 28 with an out-of-range rate
    std::size_t start = 0;
    for (int i = 0; i < 28; ++i) start = bad_rate.find(',', start) + 1;
    return start;
  }();
  bad_rate.replace(pos, bad_rate.find(',', pos) - pos, "1.50");
  CHECK_THROWS_AS(kdd::encode_instance(kdd::parse_kdd_line(bad_rate, 1)), ParseError);
}

TEST_CASE("load_dataset from a stream") {
  std::istringstream empty("");
  CHECK(kdd::load_dataset(empty).empty());

  std::istringstream in(sample_line("normal.") + "\n" + sample_line("smurf.", "icmp") + "\n\n" +
                        sample_line("teardrop.", "udp") + "\n");
  const auto data = kdd::load_dataset(in);
  REQUIRE(data.size() == 3);
  CHECK(kdd::ClassTable::canonical().entry(data[0].class_id).name == "normal");
  CHECK(kdd::ClassTable::canonical().entry(data[1].class_id).name == "smurf");
  CHECK(kdd::ClassTable::canonical().entry(data[2].class_id).name == "teardrop");

  std::istringstream bad(sample_line("normal.") + "\nnot,a,record\n");
  try {
    kdd::load_dataset(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("load_dataset reads plain and gzip files identically") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "alnid_kdd_test";
  fs::create_directories(dir);
  const std::string text = synth::make_dataset(synth::small_all_classes(3));

  const fs::path plain = dir / "data.txt";
  {
    std::ofstream out(plain);
    out << text;
  }
  const fs::path gz = dir / "data.txt.gz";
  {
    gzFile f = gzopen(gz.string().c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
  }

  const auto a = kdd::load_dataset(plain);
  const auto b = kdd::load_dataset(gz);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].class_id == b[i].class_id);
    CHECK(a[i].features == b[i].features);
  }
  CHECK_THROWS_AS(kdd::load_dataset(dir / "missing.txt"), alnid::Error);
  fs::remove_all(dir);
}

TEST_CASE("split_zero_shot partitions by flag") {
  std::istringstream only_normal(sample_line("normal.") + "\n" + sample_line("normal.") + "\n");
  const auto data = kdd::load_dataset(only_normal);
  const auto split = kdd::split_zero_shot(data);
  CHECK(split.unseen.empty());
  CHECK(split.seen.size() == 2);

  std::istringstream synth_in(synth::make_dataset(synth::small_all_classes(2)));
  const auto all = kdd::load_dataset(synth_in);
  const auto s = kdd::split_zero_shot(all);
  CHECK(s.seen.size() + s.unseen.size() == all.size());
  CHECK(s.unseen.size() == 8 * 2);
  for (const auto& inst : s.unseen)
    CHECK(kdd::ClassTable::canonical().entry(inst.class_id).zero_shot);
}

TEST_CASE("census counts and mismatch detection") {
  // 5 per class: no canonical class expects exactly 5, so every row mismatches
  std::istringstream in(synth::make_dataset(synth::small_all_classes(5)));
  const auto data = kdd::load_dataset(in);
  const auto counts = kdd::census(data);
  const auto& table = kdd::ClassTable::canonical();
  REQUIRE(counts.size() == table.size());
  for (auto c : counts) CHECK(c == 5);

  // category histogram equals the sum of its classes' counts
  std::array<std::int64_t, kdd::kNumCategories> by_category{};
  for (const auto& inst : data) ++by_category[static_cast<std::size_t>(inst.category)];
  std::array<std::int64_t, kdd::kNumCategories> from_census{};
  for (std::size_t c = 0; c < table.size(); ++c)
    from_census[static_cast<std::size_t>(table.entry(c).category)] += counts[c];
  CHECK(by_category == from_census);

  const auto mismatches = kdd::census_mismatches(counts);
  CHECK(mismatches.size() == table.size());  // synthetic counts differ everywhere
}

TEST_CASE("attribute_stats matches a naive two-pass oracle") {
  std::istringstream one(sample_line("normal.") + "\n");
  const auto single = kdd::load_dataset(one);
  const auto s = kdd::attribute_stats(single, 0);
  CHECK(s.min == 2.0);
  CHECK(s.max == 2.0);
  CHECK(s.mean == 2.0);
  CHECK(s.stddev == 0.0);

  std::istringstream in(synth::make_dataset(synth::small_all_classes(6)));
  const auto data = kdd::load_dataset(in);
  for (std::size_t a = 0; a < kdd::kNumAttributes; ++a) {
    std::vector<double> column;
    for (const auto& inst : data) column.push_back(inst.features[a]);
    const auto got = kdd::attribute_stats(data, a);
    const auto want = oracle::two_pass_stats(column);
    CHECK(got.min == want.min);
    CHECK(got.max == want.max);
    CHECK(got.mean == Catch::Approx(want.mean).epsilon(1e-9));
    CHECK(got.stddev == Catch::Approx(want.stddev).epsilon(1e-9).margin(1e-12));
  }

  CHECK_THROWS_AS(kdd::attribute_stats({}, 0), alnid::Error);
  CHECK_THROWS_AS(kdd::attribute_stats(data, kdd::kNumAttributes), alnid::Error);
}

TEST_CASE("deterministic encoding") {
  const std::string line = sample_line("neptune.");
  const auto a = kdd::encode_instance(kdd::parse_kdd_line(line, 1));
  const auto b = kdd::encode_instance(kdd::parse_kdd_line(line, 99));
  CHECK(a.features == b.features);
  CHECK(a.class_id == b.class_id);
}

TEST_CASE("stratified_subsample is deterministic and proportional") {
  std::istringstream in(synth::make_dataset(synth::small_all_classes(40)));
  const auto data = kdd::load_dataset(in);

  const auto s1 = kdd::stratified_subsample(data, 230, 5);
  const auto s2 = kdd::stratified_subsample(data, 230, 5);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].class_id == s2[i].class_id);
    CHECK(s1[i].features == s2[i].features);
  }

  // every class still present, roughly proportional
  const auto counts = kdd::census(s1);
  for (auto c : counts) {
    CHECK(c >= 1);
    CHECK(c <= 40);
  }

  // a subsample is an order-preserving subsequence of the input
  std::size_t cursor = 0;
  for (const auto& inst : s1) {
    while (cursor < data.size() && !(data[cursor].class_id == inst.class_id &&
                                     data[cursor].features == inst.features))
      ++cursor;
    REQUIRE(cursor < data.size());
    ++cursor;
  }

  // target at or above the dataset size returns everything
  CHECK(kdd::stratified_subsample(data, data.size(), 1).size() == data.size());
  CHECK(kdd::stratified_subsample(data, 0, 1).size() == data.size());
}
