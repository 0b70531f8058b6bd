#include "seizset/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seizset/errors.hpp"

namespace seizset {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

bool parse_double(std::string_view text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_int(std::string_view text, std::int64_t& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Fixed-width ASCII field, left aligned and space padded.
std::string pad(std::string_view s, std::size_t width) {
  std::string out(s.substr(0, width));
  out.resize(width, ' ');
  return out;
}

std::string fit_number(double v, std::size_t width) {
  for (int precision = 10; precision >= 1; --precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strlen(buf) <= width) return buf;
  }
  throw SpecError("value " + format_number(v) + " does not fit an EDF field of width " + std::to_string(width));
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::string take(std::size_t width, const char* what) {
    if (offset_ + width > bytes_.size()) {
      throw ParseError("EDF truncated at byte " + std::to_string(offset_) + " while reading " + what);
    }
    std::string s(bytes_.data() + offset_, width);
    offset_ += width;
    return s;
  }
  double number(std::size_t width, const char* what) {
    const std::size_t at = offset_;
    const std::string s = take(width, what);
    double v = 0.0;
    if (!parse_double(s, v)) {
      throw ParseError("EDF malformed " + std::string(what) + " at byte " + std::to_string(at) + ": '" + trim(s) + "'");
    }
    return v;
  }
  std::int64_t integer(std::size_t width, const char* what) {
    const std::size_t at = offset_;
    const std::string s = take(width, what);
    std::int64_t v = 0;
    if (!parse_int(s, v)) {
      throw ParseError("EDF malformed " + std::string(what) + " at byte " + std::to_string(at) + ": '" + trim(s) + "'");
    }
    return v;
  }
  std::size_t offset() const noexcept { return offset_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

const std::vector<std::string>& canonical_channels() {
  static const std::vector<std::string> labels{
      "FP1-F7", "F7-T7", "T7-P7", "P7-O1", "P3-O1", "C3-P3", "F3-C3", "FP1-F3", "FZ-CZ",
      "CZ-PZ",  "P4-O2", "C4-P4", "F4-C4", "FP2-F4", "FP2-F8", "F8-T8", "T8-P8", "P8-O2"};
  return labels;
}

std::string normalize_label(std::string_view label) {
  std::string s = trim(label);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

void EegRecord::validate() const {
  if (sampling_rate <= 0) throw RecordError("sampling rate must be positive, got " + std::to_string(sampling_rate));
  if (samples.empty()) throw RecordError("record has no channels");
  if (channel_labels.size() != samples.size()) {
    throw RecordError(std::to_string(channel_labels.size()) + " labels for " + std::to_string(samples.size()) +
                      " channels");
  }
  const std::size_t n = samples.front().size();
  for (std::size_t c = 0; c < samples.size(); ++c) {
    if (samples[c].size() != n) {
      throw RecordError("channel " + channel_labels[c] + " has " + std::to_string(samples[c].size()) +
                        " samples, expected " + std::to_string(n));
    }
  }
}

namespace {

void check_duration(const EegRecord& record, const IngestOptions& options, const std::string& source) {
  if (record.sample_count() == 0) throw RecordError(source + ": no samples");
  if (record.duration_s() < options.min_duration_s) {
    throw RecordError(source + ": duration " + format_number(record.duration_s()) + " s is shorter than " +
                      format_number(options.min_duration_s) + " s");
  }
}

/// Maps requested labels to source indices. Exact normalized match first,
/// then a match ignoring a trailing "-<digit>" duplicate marker. The first
/// occurrence of a duplicated label wins.
std::vector<std::size_t> match_channels(const std::vector<std::string>& available,
                                        const std::vector<std::string>& requested) {
  std::vector<std::string> norm, stripped;
  for (const auto& a : available) {
    norm.push_back(normalize_label(a));
    std::string s = norm.back();
    if (s.size() > 2 && s[s.size() - 2] == '-' && std::isdigit(static_cast<unsigned char>(s.back()))) {
      s.resize(s.size() - 2);
    }
    stripped.push_back(s);
  }
  auto index_of = [](const std::vector<std::string>& v, const std::string& x) -> std::optional<std::size_t> {
    const auto it = std::find(v.begin(), v.end(), x);
    if (it == v.end()) return std::nullopt;
    return static_cast<std::size_t>(it - v.begin());
  };
  std::vector<std::size_t> picks;
  std::vector<std::string> missing;
  for (const auto& r : requested) {
    const std::string want = normalize_label(r);
    auto idx = index_of(norm, want);
    if (!idx) idx = index_of(stripped, want);
    if (idx) {
      picks.push_back(*idx);
    } else {
      missing.push_back(r);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing required channel(s):";
    for (const auto& m : missing) msg += " " + m;
    throw ChannelError(msg);
  }
  return picks;
}

}  // namespace

// ---------------------------------------------------------------------------
// EDF

double EdfFile::start_epoch_s() const {
  int dd = 0, mm = 0, yy = 0, h = 0, mi = 0, s = 0;
  if (std::sscanf(start_date.c_str(), "%d.%d.%d", &dd, &mm, &yy) != 3 ||
      std::sscanf(start_time.c_str(), "%d.%d.%d", &h, &mi, &s) != 3) {
    throw ParseError("EDF start date/time not in dd.mm.yy / hh.mm.ss form: '" + start_date + "' '" + start_time + "'");
  }
  const int year = yy >= 85 ? 1900 + yy : 2000 + yy;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year(year), month(static_cast<unsigned>(mm)), day(static_cast<unsigned>(dd))};
  if (!ymd.ok()) throw ParseError("EDF start date is not a calendar date: '" + start_date + "'");
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + s;
}

EdfFile read_edf_file(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  HeaderReader hr(bytes);
  EdfFile file;

  const std::string version = hr.take(8, "version");
  if (trim(version) != "0") throw ParseError("EDF version field at byte 0 must be \"0\", got '" + trim(version) + "'");
  file.patient = trim(hr.take(80, "patient id"));
  file.recording = trim(hr.take(80, "recording id"));
  file.start_date = trim(hr.take(8, "start date"));
  file.start_time = trim(hr.take(8, "start time"));
  const std::int64_t header_bytes = hr.integer(8, "header byte count");
  const std::string reserved = trim(hr.take(44, "reserved"));
  if (reserved.rfind("EDF+D", 0) == 0) throw ParseError("discontinuous EDF+ files are not supported (byte 192)");
  file.record_count = hr.integer(8, "data record count");
  file.record_duration_s = hr.number(8, "data record duration");
  const std::int64_t ns = hr.integer(4, "signal count");
  if (ns < 1) throw ParseError("EDF signal count at byte 252 must be >= 1, got " + std::to_string(ns));
  if (file.record_duration_s <= 0) throw ParseError("EDF data record duration at byte 244 must be positive");
  if (header_bytes != 256 * (ns + 1)) {
    throw ParseError("EDF header byte count at byte 184 is " + std::to_string(header_bytes) + ", expected " +
                     std::to_string(256 * (ns + 1)));
  }

  file.signals.resize(static_cast<std::size_t>(ns));
  for (auto& sig : file.signals) sig.label = trim(hr.take(16, "signal label"));
  for (auto& sig : file.signals) sig.transducer = trim(hr.take(80, "transducer"));
  for (auto& sig : file.signals) sig.physical_dimension = trim(hr.take(8, "physical dimension"));
  for (auto& sig : file.signals) sig.physical_min = hr.number(8, "physical minimum");
  for (auto& sig : file.signals) sig.physical_max = hr.number(8, "physical maximum");
  for (auto& sig : file.signals) sig.digital_min = static_cast<int>(hr.integer(8, "digital minimum"));
  for (auto& sig : file.signals) sig.digital_max = static_cast<int>(hr.integer(8, "digital maximum"));
  for (auto& sig : file.signals) sig.prefiltering = trim(hr.take(80, "prefiltering"));
  for (auto& sig : file.signals) {
    const std::size_t at = hr.offset();
    sig.samples_per_record = static_cast<int>(hr.integer(8, "samples per record"));
    if (sig.samples_per_record < 1) throw ParseError("EDF samples per record at byte " + std::to_string(at) + " < 1");
  }
  for (std::size_t i = 0; i < file.signals.size(); ++i) hr.take(32, "signal reserved");

  for (const auto& sig : file.signals) {
    if (normalize_label(sig.label) == "EDF ANNOTATIONS") {
      throw ParseError("EDF+ annotation signals are not supported");
    }
    if (sig.digital_max <= sig.digital_min) throw ParseError("EDF signal " + sig.label + ": digital max <= min");
    if (sig.physical_max == sig.physical_min) throw ParseError("EDF signal " + sig.label + ": physical max == min");
  }

  std::size_t record_bytes = 0;
  for (const auto& sig : file.signals) record_bytes += 2 * static_cast<std::size_t>(sig.samples_per_record);
  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(header_bytes);
  if (file.record_count < 0) file.record_count = static_cast<std::int64_t>(data_bytes / record_bytes);
  if (static_cast<std::size_t>(file.record_count) * record_bytes > data_bytes) {
    throw ParseError("EDF data section truncated: header promises " + std::to_string(file.record_count) +
                     " records of " + std::to_string(record_bytes) + " bytes, file has " +
                     std::to_string(data_bytes) + " bytes after byte " + std::to_string(header_bytes));
  }

  for (auto& sig : file.signals) sig.digital.resize(static_cast<std::size_t>(sig.samples_per_record * file.record_count));
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data()) + header_bytes;
  std::size_t pos = 0;
  for (std::int64_t r = 0; r < file.record_count; ++r) {
    for (auto& sig : file.signals) {
      std::int16_t* dst = sig.digital.data() + r * sig.samples_per_record;
      for (int k = 0; k < sig.samples_per_record; ++k, pos += 2) {
        const auto u = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
        dst[k] = static_cast<std::int16_t>(u);
      }
    }
  }
  return file;
}

void write_edf_file(const std::filesystem::path& path, const EdfFile& file) {
  const std::size_t ns = file.signals.size();
  if (ns == 0) throw SpecError("EDF needs at least one signal");
  std::string header;
  header += pad("0", 8);
  header += pad(file.patient, 80);
  header += pad(file.recording, 80);
  header += pad(file.start_date, 8);
  header += pad(file.start_time, 8);
  header += pad(std::to_string(256 * (ns + 1)), 8);
  header += pad("", 44);
  header += pad(std::to_string(file.record_count), 8);
  header += pad(fit_number(file.record_duration_s, 8), 8);
  header += pad(std::to_string(ns), 4);
  for (const auto& s : file.signals) header += pad(s.label, 16);
  for (const auto& s : file.signals) header += pad(s.transducer, 80);
  for (const auto& s : file.signals) header += pad(s.physical_dimension, 8);
  for (const auto& s : file.signals) header += pad(fit_number(s.physical_min, 8), 8);
  for (const auto& s : file.signals) header += pad(fit_number(s.physical_max, 8), 8);
  for (const auto& s : file.signals) header += pad(std::to_string(s.digital_min), 8);
  for (const auto& s : file.signals) header += pad(std::to_string(s.digital_max), 8);
  for (const auto& s : file.signals) header += pad(s.prefiltering, 80);
  for (const auto& s : file.signals) header += pad(std::to_string(s.samples_per_record), 8);
  for (std::size_t i = 0; i < ns; ++i) header += pad("", 32);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> block;
  for (std::int64_t r = 0; r < file.record_count; ++r) {
    block.clear();
    for (const auto& s : file.signals) {
      if (s.digital.size() != static_cast<std::size_t>(s.samples_per_record * file.record_count)) {
        throw SpecError("EDF signal " + s.label + " sample count does not match record layout");
      }
      for (int k = 0; k < s.samples_per_record; ++k) {
        const auto u = static_cast<std::uint16_t>(s.digital[r * s.samples_per_record + k]);
        block.push_back(static_cast<char>(u & 0xff));
        block.push_back(static_cast<char>(u >> 8));
      }
    }
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
  }
  if (!out) throw IoError("short write to " + path.string());
}

EegRecord read_edf(const std::filesystem::path& path, const IngestOptions& options) {
  const EdfFile file = read_edf_file(path);
  std::vector<std::string> available;
  for (const auto& s : file.signals) available.push_back(s.label);

  std::vector<std::size_t> picks;
  if (options.channels.empty()) {
    for (std::size_t i = 0; i < file.signals.size(); ++i) picks.push_back(i);
  } else {
    picks = match_channels(available, options.channels);
  }

  EegRecord record;
  const int spr = file.signals[picks.front()].samples_per_record;
  for (auto i : picks) {
    if (file.signals[i].samples_per_record != spr) {
      throw RecordError(path.string() + ": selected channels have different sampling rates");
    }
  }
  const double rate = spr / file.record_duration_s;
  if (std::abs(rate - std::round(rate)) > 1e-9) {
    throw RecordError(path.string() + ": non-integer sampling rate " + format_number(rate));
  }
  record.sampling_rate = static_cast<int>(std::lround(rate));
  record.start_time = file.start_epoch_s();
  for (std::size_t k = 0; k < picks.size(); ++k) {
    const EdfSignal& sig = file.signals[picks[k]];
    record.channel_labels.push_back(options.channels.empty() ? sig.label : options.channels[k]);
    std::vector<double> phys(sig.digital.size());
    for (std::size_t n = 0; n < phys.size(); ++n) phys[n] = sig.to_physical(sig.digital[n]);
    record.samples.push_back(std::move(phys));
  }
  record.validate();
  check_duration(record, options, path.string());
  return record;
}

EdfFile edf_from_record(const EegRecord& record, double record_duration_s) {
  record.validate();
  const double spr_exact = record.sampling_rate * record_duration_s;
  const int spr = static_cast<int>(std::lround(spr_exact));
  if (spr < 1 || std::abs(spr_exact - spr) > 1e-9) throw SpecError("record duration gives fractional samples");
  EdfFile file;
  file.record_duration_s = record_duration_s;
  file.record_count = static_cast<std::int64_t>(record.sample_count() / static_cast<std::size_t>(spr));
  if (static_cast<std::size_t>(file.record_count) * spr != record.sample_count()) {
    throw SpecError("sample count is not a whole number of EDF data records");
  }
  if (record.start_time > 0) {
    const auto secs = static_cast<std::int64_t>(record.start_time);
    using namespace std::chrono;
    const sys_days day_point{days{secs / 86400}};
    const year_month_day ymd{day_point};
    const std::int64_t tod = secs % 86400;
    char date[16], time[16];
    std::snprintf(date, sizeof date, "%02u.%02u.%02d", static_cast<unsigned>(ymd.day()),
                  static_cast<unsigned>(ymd.month()), static_cast<int>(ymd.year()) % 100);
    std::snprintf(time, sizeof time, "%02d.%02d.%02d", static_cast<int>(tod / 3600), static_cast<int>(tod / 60 % 60),
                  static_cast<int>(tod % 60));
    file.start_date = date;
    file.start_time = time;
  }
  for (std::size_t c = 0; c < record.channel_count(); ++c) {
    EdfSignal sig;
    sig.label = record.channel_labels[c];
    sig.samples_per_record = spr;
    double peak = 1.0;
    for (double v : record.samples[c]) peak = std::max(peak, std::abs(v));
    // Round the range up to a value that survives the 8-character field.
    double range = std::stod(fit_number(peak * 1.0001, 7));
    while (range < peak) range = std::stod(fit_number(range * 1.001, 7));
    sig.physical_min = -range;
    sig.physical_max = range;
    sig.digital_min = -32767;
    sig.digital_max = 32767;
    sig.digital.resize(record.sample_count());
    for (std::size_t n = 0; n < sig.digital.size(); ++n) {
      const double d = (record.samples[c][n] - sig.physical_min) / sig.scale() + sig.digital_min;
      sig.digital[n] = static_cast<std::int16_t>(std::clamp<long>(std::lround(d), sig.digital_min, sig.digital_max));
    }
    file.signals.push_back(std::move(sig));
  }
  return file;
}

// ---------------------------------------------------------------------------
// CSV

EegRecord read_csv_record(const std::filesystem::path& path, int sampling_rate, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw RecordError(path.string() + ": empty file");
  std::vector<std::string> labels;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) labels.push_back(trim(cell));
  }
  if (labels.empty()) throw ParseError(path.string() + ":1: no channel labels");

  EegRecord all;
  all.sampling_rate = sampling_rate;
  all.channel_labels = labels;
  all.samples.assign(labels.size(), {});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::size_t col = 0, start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell =
          std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (col >= labels.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": more than " +
                         std::to_string(labels.size()) + " columns");
      }
      double v = 0.0;
      if (!parse_double(cell, v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + trim(cell) + "'");
      }
      all.samples[col++].push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != labels.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(labels.size()) +
                       " columns, got " + std::to_string(col));
    }
  }
  if (all.sample_count() == 0) throw RecordError(path.string() + ": empty data section");
  if (sampling_rate <= 0) throw RecordError("sampling rate must be positive");

  EegRecord record;
  if (options.channels.empty()) {
    record = std::move(all);
  } else {
    record.sampling_rate = sampling_rate;
    const auto picks = match_channels(all.channel_labels, options.channels);
    for (std::size_t k = 0; k < picks.size(); ++k) {
      record.channel_labels.push_back(options.channels[k]);
      record.samples.push_back(all.samples[picks[k]]);
    }
  }
  record.validate();
  check_duration(record, options, path.string());
  return record;
}

void write_csv_record(const std::filesystem::path& path, const EegRecord& record) {
  record.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < record.channel_count(); ++c) out << (c ? "," : "") << record.channel_labels[c];
  out << '\n';
  for (std::size_t n = 0; n < record.sample_count(); ++n) {
    for (std::size_t c = 0; c < record.channel_count(); ++c) {
      out << (c ? "," : "") << format_number(record.samples[c][n]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Annotations

void validate_annotations(SeizureAnnotations& annotations) {
  for (const auto& e : annotations.events) {
    if (!(e.onset_s < e.end_s)) {
      throw ValidationError("seizure interval (" + format_number(e.onset_s) + ", " + format_number(e.end_s) +
                            ") is inverted or empty");
    }
  }
  std::sort(annotations.events.begin(), annotations.events.end(),
            [](const Seizure& a, const Seizure& b) { return a.onset_s < b.onset_s; });
  for (std::size_t i = 1; i < annotations.events.size(); ++i) {
    if (annotations.events[i].onset_s < annotations.events[i - 1].end_s) {
      throw ValidationError("seizures starting at " + format_number(annotations.events[i - 1].onset_s) + " and " +
                            format_number(annotations.events[i].onset_s) + " overlap");
    }
  }
}

SeizureAnnotations load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  SeizureAnnotations ann;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (key == "seizure") {
      std::string a, b, extra;
      Seizure s;
      if (!(ss >> a >> b) || (ss >> extra) || !parse_double(a, s.onset_s) || !parse_double(b, s.end_s)) {
        throw ParseError(where + ": expected 'seizure <onset_s> <end_s>'");
      }
      ann.events.push_back(s);
    } else if (key == "start") {
      std::string a;
      double v = 0.0;
      if (!(ss >> a) || !parse_double(a, v)) throw ParseError(where + ": expected 'start <seconds>'");
      ann.record_start_s = v;
    } else if (key == "patient") {
      ss >> ann.patient_id;
    } else {
      throw ParseError(where + ": unknown directive '" + key + "'");
    }
  }
  validate_annotations(ann);
  return ann;
}

void save_annotations(const std::filesystem::path& path, const SeizureAnnotations& annotations) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (!annotations.patient_id.empty()) out << "patient " << annotations.patient_id << '\n';
  if (annotations.record_start_s) out << "start " << format_number(*annotations.record_start_s) << '\n';
  for (const auto& e : annotations.events) {
    out << "seizure " << format_number(e.onset_s) << ' ' << format_number(e.end_s) << '\n';
  }
}

}  // namespace seizset
