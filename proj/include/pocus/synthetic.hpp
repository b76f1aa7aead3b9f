#ifndef POCUS_SYNTHETIC_HPP
#define POCUS_SYNTHETIC_HPP

#include <cstdint>
#include <string>

namespace pocus {

// Procedurally built stand-in corpus: positives show a bright moving blob
// over speckle, negatives are static speckle. Separable by design so the
// pipeline can be exercised end to end without the licensed dataset.
struct SyntheticSpec {
  int train_pos = 4, train_neg = 4;
  int val_pos = 1, val_neg = 1;
  int test_pos = 1, test_neg = 1;
  int decoys = 0;  // extra ineligible rows (wrong class/probe) to exercise filtering
  int side = 64;
  int min_frames = 30;
  int max_frames = 75;
  std::uint64_t seed = 1234;

  void validate() const;
};

// Writes out_dir/videos/*.avi plus out_dir/manifest.csv (with an explicit
// split column matching the requested counts) and returns the manifest path.
std::string generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace pocus

#endif  // POCUS_SYNTHETIC_HPP
