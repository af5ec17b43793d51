#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voicing/common.hpp"

// Time-aligned transcriptions, phone classes, landmark derivation and
// landmark-region extraction.

namespace voicing::corpus {

enum class Manner {
  kStopClosure,
  kStopRelease,
  kFricative,
  kAffricate,
  kNasal,
  kVowel,
  kGlide,
  kOther,
};

enum class Voicing { kVoiced, kUnvoiced, kNone };

bool is_obstruent(Manner manner);
std::string to_string(Manner manner);
std::string to_string(Voicing voicing);

struct PhoneClass {
  Manner manner = Manner::kOther;
  Voicing voicing = Voicing::kNone;

  bool operator==(const PhoneClass&) const = default;
};

// Phone symbol -> {manner, voicing}. Obstruent manners carry voiced/unvoiced;
// every other manner carries "na" (enforced at parse time).
class PhoneClassMap {
 public:
  // The TIMIT-phoneset map shipped with the repo (data/english.map).
  static PhoneClassMap default_english();
  // One `phone manner voicing` triple per line; lines starting with '#' are
  // comments (the character is legal inside phone symbols like h#).
  static PhoneClassMap parse(const std::string& text);
  static PhoneClassMap load(const std::filesystem::path& path);

  const PhoneClass* find(const std::string& phone) const;
  // Throws DataError naming the phone when unmapped.
  const PhoneClass& at(const std::string& phone) const;
  bool is_obstruent(const std::string& phone) const;
  std::size_t size() const { return entries_.size(); }
  std::string to_text() const;

  bool operator==(const PhoneClassMap&) const = default;

 private:
  std::map<std::string, PhoneClass> entries_;
};

struct PhoneSegment {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string utterance_id;

  double duration() const { return end_s - start_s; }
  double midpoint() const { return 0.5 * (start_s + end_s); }
};

// Parses `<start_sample> <end_sample> <phone>` lines; times come out as
// sample_index / sample_rate. Rejects malformed lines (with the line number),
// zero-length or reversed intervals, and overlaps.
std::vector<PhoneSegment> parse_alignment(const std::string& text,
                                          double sample_rate,
                                          const std::string& utterance_id = "");

enum class LandmarkType { kSc, kSr, kFc, kFr, kNc, kNr, kV, kG };

bool is_closure(LandmarkType kind);   // Sc, Fc, Nc
bool is_release(LandmarkType kind);   // Sr, Fr, Nr
bool is_obstruent(LandmarkType kind); // Sc, Sr, Fc, Fr
std::string to_string(LandmarkType kind);
std::optional<LandmarkType> landmark_type_from(const std::string& token);

constexpr std::size_t kNoSegment = std::size_t(-1);

struct Landmark {
  double time_s = 0.0;
  LandmarkType kind = LandmarkType::kV;
  // Index into the segment list the landmark was derived from; kNoSegment for
  // landmarks read back from a file.
  std::size_t segment_index = kNoSegment;
};

// Stop releases get Sr at their start, stop closures Sc at their start;
// fricatives and affricates get Fc at the start and Fr at the end; nasals
// Nc/Nr likewise; vowels and glides one landmark at the midpoint. Output is
// sorted by time. Unmapped phones raise DataError naming the phone.
std::vector<Landmark> derive_landmarks(const std::vector<PhoneSegment>& segments,
                                       const PhoneClassMap& map);

// Voicing of an obstruent segment; DataError for non-obstruents.
Voicing label_voicing(const PhoneSegment& segment, const PhoneClassMap& map);

constexpr double kRegionSeconds = 0.020;

struct LandmarkRegion {
  Signal samples;  // exactly 20 ms of 16 kHz audio (320 samples)
  Landmark landmark;
  Voicing label = Voicing::kNone;
  double start_s = 0.0;
  double end_s = 0.0;
  bool padded = false;  // true when out-of-bounds samples were zero-filled
};

// One region per obstruent landmark: closures take the 20 ms after the
// landmark, releases the 20 ms before. V/G/Nc/Nr landmarks are skipped.
// Regions that fall outside the audio are zero-padded and flagged.
std::vector<LandmarkRegion> extract_regions(const Signal& audio,
                                            double sample_rate,
                                            const std::vector<PhoneSegment>& segments,
                                            const std::vector<Landmark>& landmarks,
                                            const PhoneClassMap& map);

// `<time_s>\t<type>` per line, times with 4 decimals (0.1 ms granularity).
std::string write_landmark_file(const std::vector<Landmark>& landmarks);
std::vector<Landmark> read_landmark_file(const std::string& text);

}  // namespace voicing::corpus
