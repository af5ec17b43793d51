#pragma once

#include <cstdint>
#include <filesystem>

#include "voicing/corpus.hpp"

// Deterministic synthetic speech corpora: labeled voiced/unvoiced obstruent
// tokens with known ground truth (F0, VOT), each followed by a two-resonator
// vowel so formant-transition and VOT cues exist. Desk-scale stand-in for
// licensed corpora.

namespace voicing::corpus {

struct SynthSpec {
  std::size_t n_utterances = 50;
  std::size_t tokens_per_utterance = 8;
  double f0_lo_hz = 100.0;
  double f0_hi_hz = 200.0;
  double snr_db = 15.0;
  std::uint64_t seed = 1;
  double class_ratio = 0.5;  // voiced fraction, constructed exactly
  // Recording-channel model applied to the whole utterance: tilt 0 is flat,
  // positive brightens (first-order pre-emphasis), negative darkens
  // (one-pole lowpass), magnitude < 1; gain_db shifts the level.
  double channel_tilt = 0.0;
  double channel_gain_db = 0.0;
  // Fricative/aspiration noise concentration band. Shifted regimes move the
  // band the way fricative spectra differ across languages; two sub-bands
  // model places of articulation with double-peaked spectra.
  double noise_band_lo_hz = 2000.0;
  double noise_band_hi_hz = 7000.0;
  int noise_subbands = 1;  // 1 or 2

  void validate() const;  // throws DataError on out-of-range fields
};

struct SynthToken {
  std::size_t utterance_index = 0;
  std::string consonant;  // obstruent phone: z, s, d (with dcl), t (with tcl)
  Voicing label = Voicing::kNone;
  double f0_hz = 0.0;  // generator F0 for the token's voiced spans
  double vot_s = 0.0;  // release duration for stops, consonant duration for fricatives
  // A fixed fraction of voiced tokens partially devoice, the way real
  // obstruents do: fricatives lose voicing after the first 40 % of the
  // segment, stops lose the closure voice bar. Their labels stay voiced.
  bool partially_devoiced = false;
  // Indices into the utterance's segment list, for ground-truth lookups.
  std::size_t consonant_segment = kNoSegment;  // fricative, or stop release
  std::size_t closure_segment = kNoSegment;    // stops only
  std::size_t vowel_segment = kNoSegment;
};

struct SynthUtterance {
  std::string id;
  Signal samples;  // 16 kHz
  std::vector<PhoneSegment> segments;
};

struct SynthCorpus {
  SynthSpec spec;
  std::vector<SynthUtterance> utterances;
  std::vector<SynthToken> tokens;
};

// Bit-identical output for identical specs. Voiced tokens carry a
// band-limited pulse train mixed with shaped noise at snr_db; unvoiced tokens
// are shaped noise only (fricatives: 2-7 kHz noise; stops: >= 40 ms closure
// then a 10-20 ms burst, with short voiced vs long unvoiced release).
SynthCorpus synthesize_corpus(const SynthSpec& spec);

// Writes wav/<id>.wav, phn/<id>.phn (parse_alignment format) and truth.csv.
void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace voicing::corpus
