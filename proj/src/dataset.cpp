#include "pocus/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "pocus/csv.hpp"
#include "pocus/errors.hpp"
#include "pocus/rng.hpp"

namespace pocus {

namespace {

std::string lower_trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  std::string out = s.substr(b, e - b + 1);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string to_string(OriginalClass c) {
  switch (c) {
    case OriginalClass::kCovid: return "covid";
    case OriginalClass::kNonCovidInfection: return "non_covid_infection";
    case OriginalClass::kOther: return "other";
    case OriginalClass::kNormal: return "normal";
  }
  return "other";
}

std::string to_string(Probe p) {
  switch (p) {
    case Probe::kConvex: return "convex";
    case Probe::kLinear: return "linear";
    case Probe::kUnknown: return "unknown";
  }
  return "unknown";
}

std::string to_string(BinaryLabel l) {
  return l == BinaryLabel::kPositive ? "positive" : "negative";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  std::string t = lower_trim(s);
  if (t == "train") return Split::kTrain;
  if (t == "val" || t == "validation") return Split::kVal;
  if (t == "test") return Split::kTest;
  throw DataError("unknown split value '" + s + "' (expected train/val/test)");
}

BinaryLabel label_from_string(const std::string& s) {
  std::string t = lower_trim(s);
  if (t == "positive") return BinaryLabel::kPositive;
  if (t == "negative") return BinaryLabel::kNegative;
  throw DataError("unknown label value '" + s + "' (expected positive/negative)");
}

void SplitSpec::validate() const {
  for (int v : {train_pos, train_neg, val_pos, val_neg, test_pos, test_neg}) {
    if (v < 0) throw UsageError("split counts must be nonnegative");
  }
  if (total() == 0) throw UsageError("split counts must cover at least one record");
}

ManifestSchema ManifestSchema::default_schema() {
  ManifestSchema s;
  s.name = "default";
  s.class_map = {
      {"covid", OriginalClass::kCovid},
      {"covid-19", OriginalClass::kCovid},
      {"covid19", OriginalClass::kCovid},
      {"non-covid", OriginalClass::kNonCovidInfection},
      {"non-covid-19", OriginalClass::kNonCovidInfection},
      {"non_covid", OriginalClass::kNonCovidInfection},
      {"non_covid_infection", OriginalClass::kNonCovidInfection},
      {"pneumonia", OriginalClass::kNonCovidInfection},
      {"other", OriginalClass::kOther},
      {"normal", OriginalClass::kNormal},
  };
  s.probe_map = {
      {"convex", Probe::kConvex},
      {"linear", Probe::kLinear},
  };
  return s;
}

OriginalClass ManifestSchema::map_class(const std::string& token) const {
  auto it = class_map.find(lower_trim(token));
  return it == class_map.end() ? OriginalClass::kOther : it->second;
}

Probe ManifestSchema::map_probe(const std::string& token) const {
  auto it = probe_map.find(lower_trim(token));
  return it == probe_map.end() ? Probe::kUnknown : it->second;
}

std::vector<VideoRecord> load_manifest(const std::string& path, const ManifestSchema& schema) {
  CsvTable table = read_csv(path);
  int c_id = table.column("id");
  int c_file = table.column("filename");
  int c_class = table.column("class");
  int c_probe = table.column("probe");
  for (auto [col, name] : {std::pair{c_id, "id"}, {c_file, "filename"}, {c_class, "class"}, {c_probe, "probe"}}) {
    if (col < 0) throw DataError("manifest " + path + " is missing mandatory column '" + name + "'");
  }
  int c_split = table.column("split");

  std::vector<VideoRecord> records;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() < table.header.size())
      throw DataError("manifest " + path + " row " + std::to_string(i + 2) + " has too few fields");
    VideoRecord r;
    r.id = row[c_id];
    if (r.id.empty()) throw DataError("manifest " + path + " row " + std::to_string(i + 2) + " has an empty id");
    if (!seen.insert(r.id).second) throw DataError("duplicate id '" + r.id + "' in manifest " + path);
    r.file_path = row[c_file];
    r.original_class = schema.map_class(row[c_class]);
    r.probe = schema.map_probe(row[c_probe]);
    if (c_split >= 0 && !row[c_split].empty()) r.split = split_from_string(row[c_split]);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<VideoRecord> filter_and_label(const std::vector<VideoRecord>& records) {
  std::vector<VideoRecord> out;
  for (const auto& r : records) {
    if (!r.eligible()) continue;
    VideoRecord labeled = r;
    labeled.binary_label = r.original_class == OriginalClass::kCovid
                               ? BinaryLabel::kPositive
                               : BinaryLabel::kNegative;
    out.push_back(std::move(labeled));
  }
  return out;
}

namespace {

// Seeded stratified assignment over one label's ids. Ids are sorted first so
// the draw depends only on the id set and the seed, never on input order.
void assign_label_splits(std::vector<VideoRecord*>& group, int n_train, int n_val, int n_test,
                         Rng rng, const char* label_name) {
  int need = n_train + n_val + n_test;
  int have = static_cast<int>(group.size());
  if (have < need)
    throw DataError("insufficient " + std::string(label_name) + " records: need " +
                    std::to_string(need) + ", have " + std::to_string(have));
  if (have > need)
    throw DataError("split counts do not cover all eligible records: " + std::to_string(have) +
                    " " + label_name + " records but counts sum to " + std::to_string(need));
  std::sort(group.begin(), group.end(),
            [](const VideoRecord* a, const VideoRecord* b) { return a->id < b->id; });
  rng.shuffle(group);
  int idx = 0;
  for (int i = 0; i < n_train; ++i) group[idx++]->split = Split::kTrain;
  for (int i = 0; i < n_val; ++i) group[idx++]->split = Split::kVal;
  for (int i = 0; i < n_test; ++i) group[idx++]->split = Split::kTest;
}

}  // namespace

std::vector<VideoRecord> make_splits(const std::vector<VideoRecord>& labeled, const SplitSpec& spec) {
  spec.validate();
  std::vector<VideoRecord> out;
  out.reserve(labeled.size());
  for (const auto& r : labeled) {
    if (!r.binary_label)
      throw DataError("record '" + r.id + "' has no binary label; run filter_and_label first");
    out.push_back(r);
  }

  bool any_explicit = std::any_of(out.begin(), out.end(), [](const VideoRecord& r) { return r.split.has_value(); });
  if (any_explicit) {
    int counts[2][3] = {};
    for (const auto& r : out) {
      if (!r.split)
        throw DataError("explicit split assignment is incomplete: record '" + r.id + "' has no split");
      int li = r.binary_label == BinaryLabel::kPositive ? 0 : 1;
      counts[li][static_cast<int>(*r.split)]++;
    }
    const int want[2][3] = {{spec.train_pos, spec.val_pos, spec.test_pos},
                            {spec.train_neg, spec.val_neg, spec.test_neg}};
    for (int li = 0; li < 2; ++li) {
      for (int si = 0; si < 3; ++si) {
        if (counts[li][si] != want[li][si])
          throw DataError("explicit split does not match requested counts: " +
                          to_string(static_cast<Split>(si)) + " has " + std::to_string(counts[li][si]) +
                          (li == 0 ? " positives" : " negatives") + ", expected " +
                          std::to_string(want[li][si]) + " (adjust the split counts to accept this split)");
      }
    }
  } else {
    std::vector<VideoRecord*> pos, neg;
    for (auto& r : out) {
      (r.binary_label == BinaryLabel::kPositive ? pos : neg).push_back(&r);
    }
    assign_label_splits(pos, spec.train_pos, spec.val_pos, spec.test_pos,
                        Rng::derived(spec.seed, "split/pos"), "positive");
    assign_label_splits(neg, spec.train_neg, spec.val_neg, spec.test_neg,
                        Rng::derived(spec.seed, "split/neg"), "negative");
  }

  std::sort(out.begin(), out.end(), [](const VideoRecord& a, const VideoRecord& b) { return a.id < b.id; });
  return out;
}

std::map<std::string, Split> load_split_overrides(const std::string& path) {
  CsvTable table = read_csv(path);
  int c_id = table.column("id");
  int c_split = table.column("split");
  if (c_id < 0 || c_split < 0)
    throw DataError("split manifest " + path + " must have columns id,split");
  std::map<std::string, Split> overrides;
  for (const auto& row : table.rows) {
    const std::string& id = row[c_id];
    if (overrides.count(id))
      throw DataError("duplicate assignment for id '" + id + "' in split manifest " + path);
    overrides[id] = split_from_string(row[c_split]);
  }
  return overrides;
}

void apply_split_overrides(std::vector<VideoRecord>& records, const std::map<std::string, Split>& overrides) {
  std::set<std::string> used;
  for (auto& r : records) {
    auto it = overrides.find(r.id);
    if (it != overrides.end()) {
      r.split = it->second;
      used.insert(r.id);
    }
  }
  for (const auto& [id, split] : overrides) {
    (void)split;
    if (!used.count(id))
      throw DataError("split manifest names unknown record id '" + id + "'");
  }
}

void write_resolved_manifest(const std::string& path, const std::vector<VideoRecord>& records) {
  CsvTable table;
  table.header = {"id", "filename", "class", "probe", "binary_label", "split"};
  for (const auto& r : records) {
    table.rows.push_back({r.id, r.file_path, to_string(r.original_class), to_string(r.probe),
                          r.binary_label ? to_string(*r.binary_label) : "",
                          r.split ? to_string(*r.split) : ""});
  }
  write_csv(path, table);
}

std::vector<VideoRecord> load_resolved_manifest(const std::string& path) {
  CsvTable table = read_csv(path);
  for (const char* name : {"id", "filename", "class", "probe", "binary_label", "split"}) {
    if (table.column(name) < 0)
      throw DataError("resolved manifest " + path + " is missing column '" + name + "'");
  }
  ManifestSchema canon;
  canon.class_map = {
      {"covid", OriginalClass::kCovid},
      {"non_covid_infection", OriginalClass::kNonCovidInfection},
      {"other", OriginalClass::kOther},
      {"normal", OriginalClass::kNormal},
  };
  canon.probe_map = {{"convex", Probe::kConvex}, {"linear", Probe::kLinear}};
  std::vector<VideoRecord> records = load_manifest(path, canon);
  int c_label = table.column("binary_label");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string& label = table.rows[i][c_label];
    if (!label.empty()) records[i].binary_label = label_from_string(label);
  }
  return records;
}

}  // namespace pocus
