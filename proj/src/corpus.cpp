#include "voicing/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voicing::corpus {

bool is_obstruent(Manner manner) {
  switch (manner) {
    case Manner::kStopClosure:
    case Manner::kStopRelease:
    case Manner::kFricative:
    case Manner::kAffricate:
      return true;
    default:
      return false;
  }
}

std::string to_string(Manner manner) {
  switch (manner) {
    case Manner::kStopClosure: return "stop_closure";
    case Manner::kStopRelease: return "stop_release";
    case Manner::kFricative: return "fricative";
    case Manner::kAffricate: return "affricate";
    case Manner::kNasal: return "nasal";
    case Manner::kVowel: return "vowel";
    case Manner::kGlide: return "glide";
    case Manner::kOther: return "other";
  }
  return "other";
}

std::string to_string(Voicing voicing) {
  switch (voicing) {
    case Voicing::kVoiced: return "voiced";
    case Voicing::kUnvoiced: return "unvoiced";
    case Voicing::kNone: return "na";
  }
  return "na";
}

namespace {

std::optional<Manner> manner_from(const std::string& token) {
  if (token == "stop_closure") return Manner::kStopClosure;
  if (token == "stop_release") return Manner::kStopRelease;
  if (token == "fricative") return Manner::kFricative;
  if (token == "affricate") return Manner::kAffricate;
  if (token == "nasal") return Manner::kNasal;
  if (token == "vowel") return Manner::kVowel;
  if (token == "glide") return Manner::kGlide;
  if (token == "other") return Manner::kOther;
  return std::nullopt;
}

std::optional<Voicing> voicing_from(const std::string& token) {
  if (token == "voiced") return Voicing::kVoiced;
  if (token == "unvoiced") return Voicing::kUnvoiced;
  if (token == "na") return Voicing::kNone;
  return std::nullopt;
}

// TIMIT phone classes. Closure phones carry the voicing of their own stop;
// hh/hv are included as fricatives and can be dropped via a custom map file.
constexpr const char* kEnglishMap = R"(# phone manner voicing
b stop_release voiced
d stop_release voiced
g stop_release voiced
p stop_release unvoiced
t stop_release unvoiced
k stop_release unvoiced
bcl stop_closure voiced
dcl stop_closure voiced
gcl stop_closure voiced
pcl stop_closure unvoiced
tcl stop_closure unvoiced
kcl stop_closure unvoiced
jh affricate voiced
ch affricate unvoiced
v fricative voiced
dh fricative voiced
z fricative voiced
zh fricative voiced
f fricative unvoiced
th fricative unvoiced
s fricative unvoiced
sh fricative unvoiced
hh fricative unvoiced
hv fricative voiced
m nasal na
n nasal na
ng nasal na
em nasal na
en nasal na
eng nasal na
nx nasal na
iy vowel na
ih vowel na
eh vowel na
ey vowel na
ae vowel na
aa vowel na
aw vowel na
ay vowel na
ah vowel na
ao vowel na
oy vowel na
ow vowel na
uh vowel na
uw vowel na
ux vowel na
er vowel na
ax vowel na
ix vowel na
axr vowel na
ax-h vowel na
l glide na
r glide na
w glide na
y glide na
el glide na
dx other na
q other na
sil other na
pau other na
epi other na
h# other na
)";

}  // namespace

PhoneClassMap PhoneClassMap::default_english() { return parse(kEnglishMap); }

PhoneClassMap PhoneClassMap::parse(const std::string& text) {
  PhoneClassMap map;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // '#' comments only at line start; phones like h# contain the character.
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string phone, manner_tok, voicing_tok;
    if (!(fields >> phone)) continue;
    if (!(fields >> manner_tok >> voicing_tok))
      throw DataError("phone map line " + std::to_string(line_no) +
                      ": expected `phone manner voicing`");
    std::string extra;
    if (fields >> extra)
      throw DataError("phone map line " + std::to_string(line_no) + ": trailing token `" +
                      extra + "`");
    const auto manner = manner_from(manner_tok);
    if (!manner)
      throw DataError("phone map line " + std::to_string(line_no) + ": unknown manner `" +
                      manner_tok + "`");
    const auto voicing = voicing_from(voicing_tok);
    if (!voicing)
      throw DataError("phone map line " + std::to_string(line_no) + ": unknown voicing `" +
                      voicing_tok + "`");
    const bool obstruent = corpus::is_obstruent(*manner);
    if (obstruent && *voicing == Voicing::kNone)
      throw DataError("phone map line " + std::to_string(line_no) + ": obstruent `" + phone +
                      "` needs voiced or unvoiced");
    if (!obstruent && *voicing != Voicing::kNone)
      throw DataError("phone map line " + std::to_string(line_no) + ": non-obstruent `" +
                      phone + "` must use voicing `na`");
    if (!map.entries_.emplace(phone, PhoneClass{*manner, *voicing}).second)
      throw DataError("phone map line " + std::to_string(line_no) + ": duplicate phone `" +
                      phone + "`");
  }
  return map;
}

PhoneClassMap PhoneClassMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("phone map: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const PhoneClass* PhoneClassMap::find(const std::string& phone) const {
  const auto it = entries_.find(phone);
  return it == entries_.end() ? nullptr : &it->second;
}

const PhoneClass& PhoneClassMap::at(const std::string& phone) const {
  const auto* entry = find(phone);
  if (!entry) throw DataError("unmapped phone `" + phone + "`");
  return *entry;
}

bool PhoneClassMap::is_obstruent(const std::string& phone) const {
  return corpus::is_obstruent(at(phone).manner);
}

std::string PhoneClassMap::to_text() const {
  std::string out = "# phone manner voicing\n";
  for (const auto& [phone, cls] : entries_)
    out += phone + " " + to_string(cls.manner) + " " + to_string(cls.voicing) + "\n";
  return out;
}

std::vector<PhoneSegment> parse_alignment(const std::string& text,
                                          double sample_rate,
                                          const std::string& utterance_id) {
  if (!(sample_rate > 0.0)) throw DataError("parse_alignment: sample rate must be positive");
  struct RawSegment {
    long long start, end;
    std::string phone;
  };
  std::vector<RawSegment> raw;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string phone;
    long long start = 0, end = 0;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!(fields >> start >> end >> phone))
      throw DataError("alignment line " + std::to_string(line_no) +
                      ": expected `<start_sample> <end_sample> <phone>`");
    std::string extra;
    if (fields >> extra)
      throw DataError("alignment line " + std::to_string(line_no) + ": trailing token `" +
                      extra + "`");
    if (start < 0)
      throw DataError("alignment line " + std::to_string(line_no) + ": negative start sample");
    if (end <= start)
      throw DataError("alignment line " + std::to_string(line_no) +
                      ": zero-length or reversed segment");
    raw.push_back({start, end, std::move(phone)});
  }
  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawSegment& a, const RawSegment& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < raw.size(); ++i)
    if (raw[i].start < raw[i - 1].end)
      throw DataError("alignment: segments `" + raw[i - 1].phone + "` and `" + raw[i].phone +
                      "` overlap at sample " + std::to_string(raw[i].start));

  std::vector<PhoneSegment> segments;
  segments.reserve(raw.size());
  for (auto& r : raw)
    segments.push_back({std::move(r.phone), double(r.start) / sample_rate,
                        double(r.end) / sample_rate, utterance_id});
  return segments;
}

bool is_closure(LandmarkType kind) {
  return kind == LandmarkType::kSc || kind == LandmarkType::kFc || kind == LandmarkType::kNc;
}

bool is_release(LandmarkType kind) {
  return kind == LandmarkType::kSr || kind == LandmarkType::kFr || kind == LandmarkType::kNr;
}

bool is_obstruent(LandmarkType kind) {
  return kind == LandmarkType::kSc || kind == LandmarkType::kSr ||
         kind == LandmarkType::kFc || kind == LandmarkType::kFr;
}

std::string to_string(LandmarkType kind) {
  switch (kind) {
    case LandmarkType::kSc: return "Sc";
    case LandmarkType::kSr: return "Sr";
    case LandmarkType::kFc: return "Fc";
    case LandmarkType::kFr: return "Fr";
    case LandmarkType::kNc: return "Nc";
    case LandmarkType::kNr: return "Nr";
    case LandmarkType::kV: return "V";
    case LandmarkType::kG: return "G";
  }
  return "?";
}

std::optional<LandmarkType> landmark_type_from(const std::string& token) {
  if (token == "Sc") return LandmarkType::kSc;
  if (token == "Sr") return LandmarkType::kSr;
  if (token == "Fc") return LandmarkType::kFc;
  if (token == "Fr") return LandmarkType::kFr;
  if (token == "Nc") return LandmarkType::kNc;
  if (token == "Nr") return LandmarkType::kNr;
  if (token == "V") return LandmarkType::kV;
  if (token == "G") return LandmarkType::kG;
  return std::nullopt;
}

std::vector<Landmark> derive_landmarks(const std::vector<PhoneSegment>& segments,
                                       const PhoneClassMap& map) {
  std::vector<Landmark> landmarks;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    switch (map.at(seg.label).manner) {
      case Manner::kStopRelease:
        landmarks.push_back({seg.start_s, LandmarkType::kSr, i});
        break;
      case Manner::kStopClosure:
        landmarks.push_back({seg.start_s, LandmarkType::kSc, i});
        break;
      case Manner::kFricative:
      case Manner::kAffricate:
        landmarks.push_back({seg.start_s, LandmarkType::kFc, i});
        landmarks.push_back({seg.end_s, LandmarkType::kFr, i});
        break;
      case Manner::kNasal:
        landmarks.push_back({seg.start_s, LandmarkType::kNc, i});
        landmarks.push_back({seg.end_s, LandmarkType::kNr, i});
        break;
      case Manner::kVowel:
        landmarks.push_back({seg.midpoint(), LandmarkType::kV, i});
        break;
      case Manner::kGlide:
        landmarks.push_back({seg.midpoint(), LandmarkType::kG, i});
        break;
      case Manner::kOther:
        break;
    }
  }
  // Ties (a release meeting the next closure) order by source-segment start,
  // so the result is a pure function of the segment set.
  std::sort(landmarks.begin(), landmarks.end(),
            [&segments](const Landmark& a, const Landmark& b) {
              if (a.time_s != b.time_s) return a.time_s < b.time_s;
              const double sa = segments[a.segment_index].start_s;
              const double sb = segments[b.segment_index].start_s;
              if (sa != sb) return sa < sb;
              return int(a.kind) < int(b.kind);
            });
  return landmarks;
}

Voicing label_voicing(const PhoneSegment& segment, const PhoneClassMap& map) {
  const auto& cls = map.at(segment.label);
  if (!is_obstruent(cls.manner))
    throw DataError("label_voicing: `" + segment.label + "` is " + to_string(cls.manner) +
                    ", not an obstruent");
  return cls.voicing;
}

std::vector<LandmarkRegion> extract_regions(const Signal& audio,
                                            double sample_rate,
                                            const std::vector<PhoneSegment>& segments,
                                            const std::vector<Landmark>& landmarks,
                                            const PhoneClassMap& map) {
  const auto region_len = std::size_t(std::llround(kRegionSeconds * sample_rate));
  std::vector<LandmarkRegion> regions;
  for (const auto& lm : landmarks) {
    if (!is_obstruent(lm.kind)) continue;
    if (lm.segment_index >= segments.size())
      throw DataError("extract_regions: landmark not bound to a segment");
    LandmarkRegion region;
    region.landmark = lm;
    region.label = label_voicing(segments[lm.segment_index], map);
    region.start_s = is_closure(lm.kind) ? lm.time_s : lm.time_s - kRegionSeconds;
    region.end_s = region.start_s + kRegionSeconds;
    const auto first = std::llround(region.start_s * sample_rate);
    region.samples.assign(region_len, 0.0);
    for (std::size_t i = 0; i < region_len; ++i) {
      const auto src = first + std::int64_t(i);
      if (src >= 0 && src < std::int64_t(audio.size()))
        region.samples[i] = audio[std::size_t(src)];
      else
        region.padded = true;
    }
    regions.push_back(std::move(region));
  }
  return regions;
}

std::string write_landmark_file(const std::vector<Landmark>& landmarks) {
  std::string out;
  char buf[64];
  for (const auto& lm : landmarks) {
    std::snprintf(buf, sizeof(buf), "%.4f\t%s\n", lm.time_s, to_string(lm.kind).c_str());
    out += buf;
  }
  return out;
}

std::vector<Landmark> read_landmark_file(const std::string& text) {
  std::vector<Landmark> landmarks;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    double time = 0.0;
    std::string token;
    if (!(fields >> time >> token))
      throw DataError("landmark file line " + std::to_string(line_no) +
                      ": expected `<time_s>\\t<type>`");
    const auto kind = landmark_type_from(token);
    if (!kind)
      throw DataError("landmark file line " + std::to_string(line_no) +
                      ": unknown landmark type `" + token + "`");
    landmarks.push_back({time, *kind, kNoSegment});
  }
  return landmarks;
}

}  // namespace voicing::corpus
