#ifndef POCUS_DATASET_HPP
#define POCUS_DATASET_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pocus {

enum class OriginalClass { kCovid, kNonCovidInfection, kOther, kNormal };
enum class Probe { kConvex, kLinear, kUnknown };
enum class BinaryLabel { kPositive, kNegative };
enum class Split { kTrain, kVal, kTest };

std::string to_string(OriginalClass c);
std::string to_string(Probe p);
std::string to_string(BinaryLabel l);
std::string to_string(Split s);
Split split_from_string(const std::string& s);
BinaryLabel label_from_string(const std::string& s);

// One ultrasound video's metadata. binary_label is present iff the record
// survives filtering (convex probe, class != other); split is assigned only
// to labeled records.
struct VideoRecord {
  std::string id;
  std::string file_path;
  OriginalClass original_class = OriginalClass::kOther;
  Probe probe = Probe::kUnknown;
  std::optional<BinaryLabel> binary_label;
  std::optional<Split> split;

  bool eligible() const {
    return original_class != OriginalClass::kOther && probe == Probe::kConvex;
  }
};

// Requested per-split, per-label record counts plus the sampling seed.
// Defaults are a 76/25/18 split over 60 positives and 59 negatives.
struct SplitSpec {
  int train_pos = 38, train_neg = 38;
  int val_pos = 12, val_neg = 13;
  int test_pos = 10, test_neg = 8;
  std::uint64_t seed = 1234;

  int total_pos() const { return train_pos + val_pos + test_pos; }
  int total_neg() const { return train_neg + val_neg + test_neg; }
  int total() const { return total_pos() + total_neg(); }
  void validate() const;
};

// Maps one manifest dialect's vocabulary onto the canonical enums. Tokens
// are matched case-insensitively after trimming; anything unmapped falls
// back to other/unknown so odd rows are excluded rather than fatal.
struct ManifestSchema {
  std::string name = "default";
  std::map<std::string, OriginalClass> class_map;
  std::map<std::string, Probe> probe_map;

  static ManifestSchema default_schema();
  OriginalClass map_class(const std::string& token) const;
  Probe map_probe(const std::string& token) const;
};

// Reads a delimited manifest (header row; mandatory columns
// id,filename,class,probe; optional split for explicit assignments).
std::vector<VideoRecord> load_manifest(const std::string& path, const ManifestSchema& schema);

// Keeps only records eligible under the probe/class filters and assigns
// binary labels: covid -> positive, normal / non-covid infection -> negative.
std::vector<VideoRecord> filter_and_label(const std::vector<VideoRecord>& records);

// Assigns every record a split. When any input record carries an explicit
// split it must cover all records and match the requested counts; otherwise a
// seeded stratified draw is used. The result is sorted by id and is a pure
// function of (record ids, spec.seed).
std::vector<VideoRecord> make_splits(const std::vector<VideoRecord>& labeled, const SplitSpec& spec);

// External split manifest: delimited text with columns id,split.
// Duplicate ids are an error.
std::map<std::string, Split> load_split_overrides(const std::string& path);
void apply_split_overrides(std::vector<VideoRecord>& records, const std::map<std::string, Split>& overrides);

// Resolved record set in the manifest format plus binary_label,split columns.
void write_resolved_manifest(const std::string& path, const std::vector<VideoRecord>& records);
std::vector<VideoRecord> load_resolved_manifest(const std::string& path);

}  // namespace pocus

#endif  // POCUS_DATASET_HPP
