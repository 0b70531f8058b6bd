#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "seizset/errors.hpp"
#include "seizset/ingest.hpp"
#include "test_util.hpp"

using namespace seizset;
using seizset::testing::TempDir;

namespace {

std::string field(const std::string& s, std::size_t width) {
  std::string out = s.substr(0, width);
  out.resize(width, ' ');
  return out;
}

struct RawSignal {
  std::string label;
  std::string pmin, pmax, dmin, dmax;
  std::vector<std::int16_t> samples;
};

/// Builds EDF bytes field by field, independent of the library writer.
std::string build_edf(const std::vector<RawSignal>& signals, int records, int spr, const std::string& ns_field = "") {
  const std::size_t ns = signals.size();
  std::string h;
  h += field("0", 8);
  h += field("X X X X", 80);
  h += field("Startdate 01-JAN-2010 X X X", 80);
  h += field("01.01.10", 8);
  h += field("00.00.00", 8);
  h += field(std::to_string(256 * (ns + 1)), 8);
  h += field("", 44);
  h += field(std::to_string(records), 8);
  h += field("1", 8);
  h += field(ns_field.empty() ? std::to_string(ns) : ns_field, 4);
  for (const auto& s : signals) h += field(s.label, 16);
  for (std::size_t i = 0; i < ns; ++i) h += field("AgAgCl electrode", 80);
  for (std::size_t i = 0; i < ns; ++i) h += field("uV", 8);
  for (const auto& s : signals) h += field(s.pmin, 8);
  for (const auto& s : signals) h += field(s.pmax, 8);
  for (const auto& s : signals) h += field(s.dmin, 8);
  for (const auto& s : signals) h += field(s.dmax, 8);
  for (std::size_t i = 0; i < ns; ++i) h += field("", 80);
  for (std::size_t i = 0; i < ns; ++i) h += field(std::to_string(spr), 8);
  for (std::size_t i = 0; i < ns; ++i) h += field("", 32);
  for (int r = 0; r < records; ++r) {
    for (const auto& s : signals) {
      for (int k = 0; k < spr; ++k) {
        const auto v = static_cast<std::uint16_t>(s.samples[static_cast<std::size_t>(r * spr + k)]);
        h.push_back(static_cast<char>(v & 0xff));
        h.push_back(static_cast<char>(v >> 8));
      }
    }
  }
  return h;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

IngestOptions options_for(std::vector<std::string> channels, double min_duration = 0.0) {
  IngestOptions o;
  o.channels = std::move(channels);
  o.min_duration_s = min_duration;
  return o;
}

EegRecord canonical_record(std::uint64_t seed, double seconds = 4.0, int fs = 256) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 40.0);
  EegRecord r;
  r.sampling_rate = fs;
  r.channel_labels = canonical_channels();
  r.samples.assign(r.channel_labels.size(), std::vector<double>(static_cast<std::size_t>(seconds * fs)));
  for (auto& ch : r.samples)
    for (auto& v : ch) v = g(rng);
  return r;
}

}  // namespace

TEST_CASE("EDF: hand-built ramp decodes to hand-computed microvolts") {
  TempDir dir("edf");
  // physical [-500, 500] over digital [-1000, 1000] gives exactly 0.5 uV per step.
  RawSignal a{"EEG A", "-500", "500", "-1000", "1000", {0, 1, 2, 3}};
  RawSignal b{"EEG B", "-500", "500", "-1000", "1000", {-1000, -2, 10, 1000}};
  write_bytes(dir / "ramp.edf", build_edf({a, b}, 1, 4));

  const EegRecord rec = read_edf(dir / "ramp.edf", options_for({"EEG A", "EEG B"}));
  CHECK(rec.sampling_rate == 4);
  REQUIRE(rec.channel_count() == 2);
  CHECK(rec.samples[0] == std::vector<double>{0.0, 0.5, 1.0, 1.5});
  // digital_min maps to physical_min, digital_max to physical_max.
  CHECK(rec.samples[1] == std::vector<double>{-500.0, -1.0, 5.0, 500.0});
  CHECK(rec.duration_s() == 1.0);
  CHECK(rec.start_time == 1262304000.0);  // 2010-01-01T00:00:00Z
}

TEST_CASE("EDF: header errors carry byte offsets") {
  TempDir dir("edf-bad");
  RawSignal a{"A", "-500", "500", "-1000", "1000", {0, 1, 2, 3}};
  write_bytes(dir / "bad.edf", build_edf({a}, 1, 4, "x1"));
  try {
    read_edf_file(dir / "bad.edf");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte 252") != std::string::npos);
  }

  std::string bytes = build_edf({a}, 1, 4);
  bytes[0] = '1';
  write_bytes(dir / "version.edf", bytes);
  CHECK_THROWS_AS(read_edf_file(dir / "version.edf"), ParseError);

  bytes = build_edf({a}, 1, 4);
  write_bytes(dir / "short.edf", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_edf_file(dir / "short.edf"), ParseError);

  bytes = build_edf({a}, 1, 4);
  std::memcpy(bytes.data() + 192, "EDF+D", 5);
  write_bytes(dir / "discont.edf", bytes);
  CHECK_THROWS_AS(read_edf_file(dir / "discont.edf"), ParseError);

  RawSignal ann{"EDF Annotations", "-1", "1", "-32768", "32767", {0, 0, 0, 0}};
  write_bytes(dir / "annot.edf", build_edf({a, ann}, 1, 4));
  CHECK_THROWS_AS(read_edf_file(dir / "annot.edf"), ParseError);
}

TEST_CASE("EDF: scrambled canonical labels come back in canonical order") {
  TempDir dir("edf-order");
  const EegRecord rec = canonical_record(3);
  EdfFile file = edf_from_record(rec);
  const EdfFile reference = file;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(file.signals.begin(), file.signals.end(), rng);
    write_edf_file(dir / "scrambled.edf", file);
    const EegRecord back = read_edf(dir / "scrambled.edf", options_for(canonical_channels()));
    CHECK(back.channel_labels == canonical_channels());
    for (std::size_t c = 0; c < 18; ++c) {
      std::vector<double> expect;
      for (auto d : reference.signals[c].digital) expect.push_back(reference.signals[c].to_physical(d));
      CHECK(back.samples[c] == expect);
    }
  }
}

TEST_CASE("EDF: canonical defaults, extras dropped, missing channels listed") {
  TempDir dir("edf-missing");
  EegRecord rec = canonical_record(4, 40.0);
  rec.channel_labels.push_back("ECG");
  rec.samples.push_back(rec.samples.front());
  write_edf_file(dir / "extra.edf", edf_from_record(rec));
  const EegRecord back = read_edf(dir / "extra.edf");
  CHECK(back.channel_count() == 18);
  CHECK(back.channel_labels == canonical_channels());

  rec = canonical_record(4, 40.0);
  rec.channel_labels.erase(rec.channel_labels.begin() + 3);
  rec.samples.erase(rec.samples.begin() + 3);
  rec.channel_labels.erase(rec.channel_labels.begin() + 5);
  rec.samples.erase(rec.samples.begin() + 5);
  write_edf_file(dir / "missing.edf", edf_from_record(rec));
  try {
    read_edf(dir / "missing.edf");
    FAIL("expected ChannelError");
  } catch (const ChannelError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(canonical_channels()[3]) != std::string::npos);
    CHECK(msg.find(canonical_channels()[6]) != std::string::npos);
  }
}

TEST_CASE("EDF: duplicated labels resolve to the first occurrence") {
  TempDir dir("edf-dup");
  EegRecord rec = canonical_record(5, 2.0);
  // CHB-MIT style: the second T8-P8 appears as T8-P8-1, the first as T8-P8-0.
  const auto t8 = static_cast<std::size_t>(
      std::find(rec.channel_labels.begin(), rec.channel_labels.end(), "T8-P8") - rec.channel_labels.begin());
  rec.channel_labels[t8] = "T8-P8-0";
  rec.channel_labels.push_back("T8-P8-1");
  rec.samples.push_back(std::vector<double>(rec.sample_count(), 0.0));
  write_edf_file(dir / "dup.edf", edf_from_record(rec));
  const EegRecord back = read_edf(dir / "dup.edf", options_for(canonical_channels()));
  const EegRecord direct = read_edf(dir / "dup.edf", options_for({}));
  CHECK(back.samples[t8] == direct.samples[t8]);
}

TEST_CASE("EDF: write then read is bit-identical in the digital domain") {
  TempDir dir("edf-rt");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EdfFile file = edf_from_record(canonical_record(seed, 3.0));
    write_edf_file(dir / "rt.edf", file);
    const EdfFile back = read_edf_file(dir / "rt.edf");
    REQUIRE(back.signals.size() == file.signals.size());
    CHECK(back.record_count == file.record_count);
    for (std::size_t s = 0; s < file.signals.size(); ++s) {
      CHECK(back.signals[s].label == file.signals[s].label);
      CHECK(back.signals[s].digital == file.signals[s].digital);
      CHECK(back.signals[s].physical_min == file.signals[s].physical_min);
      CHECK(back.signals[s].physical_max == file.signals[s].physical_max);
    }
  }
}

TEST_CASE("EDF: short records are rejected at ingest") {
  TempDir dir("edf-short");
  write_edf_file(dir / "short.edf", edf_from_record(canonical_record(1, 10.0)));
  CHECK_THROWS_AS(read_edf(dir / "short.edf"), RecordError);
  CHECK_NOTHROW(read_edf(dir / "short.edf", options_for(canonical_channels(), 10.0)));
}

TEST_CASE("CSV: duration, errors and bit-exact round trip") {
  TempDir dir("csv");
  {
    std::ofstream out(dir / "two.csv");
    out << "A,B\n";
    for (int i = 0; i < 512; ++i) out << i << ',' << -i * 0.25 << '\n';
  }
  const EegRecord rec = read_csv_record(dir / "two.csv", 256, options_for({}));
  CHECK(rec.channel_count() == 2);
  CHECK(rec.duration_s() == 2.0);
  CHECK(rec.samples[1][4] == -1.0);

  {
    std::ofstream out(dir / "empty.csv");
    out << "A,B\n";
  }
  CHECK_THROWS_AS(read_csv_record(dir / "empty.csv", 256, options_for({})), RecordError);

  {
    std::ofstream out(dir / "ragged.csv");
    out << "A,B\n1,2\n3,4\n5\n";
  }
  try {
    read_csv_record(dir / "ragged.csv", 256, options_for({}));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1e3);
  EegRecord r;
  r.sampling_rate = 128;
  r.channel_labels = {"X", "Y", "Z"};
  r.samples.assign(3, std::vector<double>(300));
  for (auto& ch : r.samples)
    for (auto& v : ch) v = g(rng) * std::exp(g(rng) * 1e-2);
  write_csv_record(dir / "rt.csv", r);
  const EegRecord back = read_csv_record(dir / "rt.csv", 128, options_for({}));
  CHECK(back.samples == r.samples);
  CHECK(back.channel_labels == r.channel_labels);
}

TEST_CASE("annotations: sorted, validated, empty allowed") {
  TempDir dir("ann");
  {
    std::ofstream out(dir / "a.txt");
    out << "# two events\nseizure 100 130\nseizure 50 60\n";
  }
  const SeizureAnnotations a = load_annotations(dir / "a.txt");
  REQUIRE(a.events.size() == 2);
  CHECK(a.events[0] == Seizure{50, 60});
  CHECK(a.events[1] == Seizure{100, 130});

  {
    std::ofstream out(dir / "inv.txt");
    out << "seizure 60 50\n";
  }
  CHECK_THROWS_AS(load_annotations(dir / "inv.txt"), ValidationError);

  {
    std::ofstream out(dir / "overlap.txt");
    out << "seizure 10 50\nseizure 40 60\n";
  }
  CHECK_THROWS_AS(load_annotations(dir / "overlap.txt"), ValidationError);

  {
    std::ofstream out(dir / "empty.txt");
    out << "# nothing\n";
  }
  CHECK(load_annotations(dir / "empty.txt").events.empty());

  {
    std::ofstream out(dir / "junk.txt");
    out << "onset 1 2\n";
  }
  CHECK_THROWS_AS(load_annotations(dir / "junk.txt"), ParseError);

  SeizureAnnotations s;
  s.patient_id = "chb01";
  s.record_start_s = 7200;
  s.events = {{10.5, 20.25}, {3000, 3040}};
  save_annotations(dir / "s.txt", s);
  const SeizureAnnotations back = load_annotations(dir / "s.txt");
  CHECK(back.events == s.events);
  CHECK(back.patient_id == "chb01");
  CHECK(back.record_start_s == s.record_start_s);
}

TEST_CASE("synth: deterministic in the seed") {
  SynthSpec spec;
  spec.n_channels = 3;
  spec.duration_s = 200;
  spec.seizure_times = {150};
  spec.preictal_s = 60;
  spec.horizon_s = 10;
  spec.informative_channels = {1};
  spec.rng_seed = 42;
  const SynthOutput a = synth_generate(spec);
  const SynthOutput b = synth_generate(spec);
  CHECK(a.record.samples == b.record.samples);
  CHECK(a.annotations.events == b.annotations.events);
  spec.rng_seed = 43;
  CHECK(synth_generate(spec).record.samples != a.record.samples);
}

TEST_CASE("synth: spec errors") {
  SynthSpec spec;
  spec.duration_s = 1000;
  spec.seizure_times = {500};
  spec.preictal_s = 600;
  CHECK_THROWS_AS(synth_generate(spec), SpecError);
  spec.preictal_s = 100;
  spec.informative_channels = {8};
  CHECK_THROWS_AS(synth_generate(spec), SpecError);
  spec.informative_channels = {2};
  spec.seizure_times = {990};
  CHECK_THROWS_AS(synth_generate(spec), SpecError);
  spec.seizure_times = {500};
  spec.preictal_band = "delta";
  CHECK_THROWS_AS(synth_generate(spec), SpecError);
  spec.preictal_band = "alpha";
  CHECK_NOTHROW(synth_generate(spec));
}

TEST_CASE("synth: output satisfies record invariants for random specs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    SynthSpec spec;
    spec.n_channels = 1 + rng() % 6;
    spec.sampling_rate = (rng() % 2) ? 256 : 128;
    spec.duration_s = 40.0 + static_cast<double>(rng() % 200);
    spec.preictal_s = 5.0 + static_cast<double>(rng() % 20);
    spec.horizon_s = static_cast<double>(rng() % 5);
    spec.seizure_duration_s = 1.0 + static_cast<double>(rng() % 10);
    spec.preictal_gain = 1.0 + static_cast<double>(rng() % 8);
    spec.preictal_band = default_bands()[rng() % 3].name;
    spec.rng_seed = rng();
    double t = spec.preictal_s + spec.horizon_s + static_cast<double>(rng() % 10);
    while (t + spec.seizure_duration_s <= spec.duration_s && spec.seizure_times.size() < 3) {
      spec.seizure_times.push_back(t);
      t += spec.seizure_duration_s + spec.preictal_s + spec.horizon_s + 1.0 + static_cast<double>(rng() % 30);
    }
    for (std::size_t c = 0; c < spec.n_channels; ++c)
      if (rng() % 2) spec.informative_channels.push_back(c);

    const SynthOutput out = synth_generate(spec);
    CHECK_NOTHROW(out.record.validate());
    CHECK(out.record.channel_count() == spec.n_channels);
    CHECK(out.record.duration_s() == doctest::Approx(spec.duration_s));
    CHECK(out.annotations.events.size() == spec.seizure_times.size());
    bool finite = true;
    for (const auto& ch : out.record.samples)
      for (double v : ch) finite = finite && std::isfinite(v);
    CHECK(finite);
  }
}
