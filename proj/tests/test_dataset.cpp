#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "pocus/csv.hpp"
#include "pocus/dataset.hpp"
#include "pocus/errors.hpp"
#include "pocus/rng.hpp"
#include "test_util.hpp"

using namespace pocus;

namespace {

std::vector<VideoRecord> labeled_records(int n_pos, int n_neg) {
  std::vector<VideoRecord> out;
  char buf[32];
  for (int i = 0; i < n_pos; ++i) {
    std::snprintf(buf, sizeof(buf), "cov_%03d", i);
    VideoRecord r;
    r.id = buf;
    r.file_path = r.id + ".avi";
    r.original_class = OriginalClass::kCovid;
    r.probe = Probe::kConvex;
    r.binary_label = BinaryLabel::kPositive;
    out.push_back(r);
  }
  for (int i = 0; i < n_neg; ++i) {
    std::snprintf(buf, sizeof(buf), "neg_%03d", i);
    VideoRecord r;
    r.id = buf;
    r.file_path = r.id + ".avi";
    r.original_class = i % 2 == 0 ? OriginalClass::kNormal : OriginalClass::kNonCovidInfection;
    r.probe = Probe::kConvex;
    r.binary_label = BinaryLabel::kNegative;
    out.push_back(r);
  }
  return out;
}

std::map<std::string, Split> split_of(const std::vector<VideoRecord>& records) {
  std::map<std::string, Split> out;
  for (const auto& r : records) {
    REQUIRE(r.split.has_value());
    out[r.id] = *r.split;
  }
  return out;
}

}  // namespace

TEST_CASE("default schema maps the manifest vocabulary") {
  ManifestSchema s = ManifestSchema::default_schema();

  CHECK(s.map_class("covid") == OriginalClass::kCovid);
  CHECK(s.map_class("COVID-19") == OriginalClass::kCovid);
  CHECK(s.map_class("Covid19") == OriginalClass::kCovid);
  CHECK(s.map_class("  covid \t") == OriginalClass::kCovid);

  CHECK(s.map_class("pneumonia") == OriginalClass::kNonCovidInfection);
  CHECK(s.map_class("Non-COVID-19") == OriginalClass::kNonCovidInfection);
  CHECK(s.map_class("non-covid") == OriginalClass::kNonCovidInfection);
  CHECK(s.map_class("non_covid_infection") == OriginalClass::kNonCovidInfection);

  CHECK(s.map_class("normal") == OriginalClass::kNormal);
  CHECK(s.map_class("other") == OriginalClass::kOther);
  // unmapped tokens fall back to the excluded class instead of failing
  CHECK(s.map_class("bacterial") == OriginalClass::kOther);
  CHECK(s.map_class("") == OriginalClass::kOther);

  CHECK(s.map_probe("convex") == Probe::kConvex);
  CHECK(s.map_probe("Convex") == Probe::kConvex);
  CHECK(s.map_probe("LINEAR") == Probe::kLinear);
  CHECK(s.map_probe("sector") == Probe::kUnknown);
}

TEST_CASE("enum names round trip") {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    CHECK(split_from_string(to_string(s)) == s);
  CHECK(split_from_string("validation") == Split::kVal);
  CHECK(split_from_string(" Test ") == Split::kTest);
  CHECK_THROWS_AS(split_from_string("holdout"), DataError);

  for (BinaryLabel l : {BinaryLabel::kPositive, BinaryLabel::kNegative})
    CHECK(label_from_string(to_string(l)) == l);
  CHECK_THROWS_AS(label_from_string("covid"), DataError);
}

TEST_CASE("manifests load with optional splits and quoted fields") {
  testutil::TempDir dir;
  std::string path = dir.file("manifest.csv");
  testutil::write_text(path,
                       "id,filename,class,probe,split\n"
                       "v1,videos/v1.avi,COVID-19,convex,train\n"
                       "v2,\"videos/two, copy.avi\",pneumonia,linear,\n"
                       "v3,videos/v3.mp4,other,convex,val\n");

  auto records = load_manifest(path, ManifestSchema::default_schema());
  REQUIRE(records.size() == 3);

  CHECK(records[0].id == "v1");
  CHECK(records[0].original_class == OriginalClass::kCovid);
  CHECK(records[0].probe == Probe::kConvex);
  REQUIRE(records[0].split.has_value());
  CHECK(*records[0].split == Split::kTrain);

  CHECK(records[1].file_path == "videos/two, copy.avi");
  CHECK(records[1].original_class == OriginalClass::kNonCovidInfection);
  CHECK(records[1].probe == Probe::kLinear);
  CHECK_FALSE(records[1].split.has_value());

  CHECK(records[2].original_class == OriginalClass::kOther);
  REQUIRE(records[2].split.has_value());
  CHECK(*records[2].split == Split::kVal);
}

TEST_CASE("manifest loading rejects structural problems") {
  testutil::TempDir dir;
  ManifestSchema schema = ManifestSchema::default_schema();

  CHECK_THROWS_AS(load_manifest(dir.file("absent.csv"), schema), DataError);

  std::string no_probe = dir.file("no_probe.csv");
  testutil::write_text(no_probe, "id,filename,class\nv1,a.avi,covid\n");
  CHECK_THROWS_AS(load_manifest(no_probe, schema), DataError);

  std::string dup = dir.file("dup.csv");
  testutil::write_text(dup,
                       "id,filename,class,probe\n"
                       "v1,a.avi,covid,convex\n"
                       "v1,b.avi,normal,convex\n");
  CHECK_THROWS_AS(load_manifest(dup, schema), DataError);

  std::string empty_id = dir.file("empty_id.csv");
  testutil::write_text(empty_id, "id,filename,class,probe\n,a.avi,covid,convex\n");
  CHECK_THROWS_AS(load_manifest(empty_id, schema), DataError);

  std::string bad_split = dir.file("bad_split.csv");
  testutil::write_text(bad_split, "id,filename,class,probe,split\nv1,a.avi,covid,convex,holdout\n");
  CHECK_THROWS_AS(load_manifest(bad_split, schema), DataError);
}

TEST_CASE("filtering keeps convex non-other records and labels them") {
  std::vector<VideoRecord> records;
  int n = 0;
  for (OriginalClass c : {OriginalClass::kCovid, OriginalClass::kNonCovidInfection,
                          OriginalClass::kOther, OriginalClass::kNormal}) {
    for (Probe p : {Probe::kConvex, Probe::kLinear, Probe::kUnknown}) {
      VideoRecord r;
      r.id = "r" + std::to_string(n++);
      r.original_class = c;
      r.probe = p;
      records.push_back(r);
    }
  }

  auto labeled = filter_and_label(records);
  REQUIRE(labeled.size() == 3);  // covid, non-covid infection, normal; convex only
  for (const auto& r : labeled) {
    CHECK(r.probe == Probe::kConvex);
    CHECK(r.original_class != OriginalClass::kOther);
    REQUIRE(r.binary_label.has_value());
    if (r.original_class == OriginalClass::kCovid)
      CHECK(*r.binary_label == BinaryLabel::kPositive);
    else
      CHECK(*r.binary_label == BinaryLabel::kNegative);
  }
}

TEST_CASE("random splits hit the requested counts exactly") {
  SplitSpec spec;  // 38/38, 12/13, 10/8 over 60 positives and 59 negatives
  auto records = labeled_records(60, 59);
  auto out = make_splits(records, spec);

  REQUIRE(out.size() == 119);
  CHECK(std::is_sorted(out.begin(), out.end(),
                       [](const VideoRecord& a, const VideoRecord& b) { return a.id < b.id; }));

  std::map<std::pair<Split, BinaryLabel>, int> counts;
  for (const auto& r : out) {
    REQUIRE(r.split.has_value());
    REQUIRE(r.binary_label.has_value());
    counts[{*r.split, *r.binary_label}]++;
  }
  CHECK(counts[{Split::kTrain, BinaryLabel::kPositive}] == 38);
  CHECK(counts[{Split::kTrain, BinaryLabel::kNegative}] == 38);
  CHECK(counts[{Split::kVal, BinaryLabel::kPositive}] == 12);
  CHECK(counts[{Split::kVal, BinaryLabel::kNegative}] == 13);
  CHECK(counts[{Split::kTest, BinaryLabel::kPositive}] == 10);
  CHECK(counts[{Split::kTest, BinaryLabel::kNegative}] == 8);

  // every input id is assigned exactly once
  std::set<std::string> ids;
  for (const auto& r : out) ids.insert(r.id);
  CHECK(ids.size() == 119);
}

TEST_CASE("split assignment depends only on the id set and the seed") {
  SplitSpec spec;
  spec.train_pos = 5;
  spec.val_pos = 2;
  spec.test_pos = 2;
  spec.train_neg = 4;
  spec.val_neg = 2;
  spec.test_neg = 1;
  auto records = labeled_records(9, 7);

  auto first = split_of(make_splits(records, spec));
  auto again = split_of(make_splits(records, spec));
  CHECK(first == again);

  // input order must not matter
  auto shuffled = records;
  Rng(42).shuffle(shuffled);
  CHECK(split_of(make_splits(shuffled, spec)) == first);

  SplitSpec other = spec;
  other.seed = spec.seed + 1;
  CHECK(split_of(make_splits(records, other)) != first);
}

TEST_CASE("splits reject record sets that do not match the counts") {
  SplitSpec spec;  // needs 60 positives, 59 negatives

  CHECK_THROWS_AS(make_splits(labeled_records(50, 59), spec), DataError);
  CHECK_THROWS_AS(make_splits(labeled_records(61, 59), spec), DataError);
  CHECK_THROWS_AS(make_splits(labeled_records(60, 58), spec), DataError);

  // records that skipped filter_and_label have no label
  auto unlabeled = labeled_records(60, 59);
  unlabeled[5].binary_label.reset();
  CHECK_THROWS_AS(make_splits(unlabeled, spec), DataError);

  SplitSpec negative;
  negative.train_pos = -1;
  CHECK_THROWS_AS(make_splits(labeled_records(60, 59), negative), UsageError);
}

TEST_CASE("explicit split columns are preserved when they match the counts") {
  SplitSpec spec;
  spec.train_pos = spec.train_neg = 4;
  spec.val_pos = spec.val_neg = 1;
  spec.test_pos = spec.test_neg = 1;

  auto records = labeled_records(6, 6);
  auto assign = [](std::vector<VideoRecord>& rs, int base) {
    for (int i = 0; i < 6; ++i)
      rs[static_cast<std::size_t>(base + i)].split =
          i < 4 ? Split::kTrain : (i == 4 ? Split::kVal : Split::kTest);
  };
  assign(records, 0);
  assign(records, 6);

  auto out = make_splits(records, spec);
  auto want = split_of(records);
  CHECK(split_of(out) == want);

  SUBCASE("count mismatch is rejected") {
    records[0].split = Split::kVal;  // 3/2/1 positives now
    CHECK_THROWS_AS(make_splits(records, spec), DataError);
  }

  SUBCASE("partial explicit assignment is rejected") {
    records[3].split.reset();
    CHECK_THROWS_AS(make_splits(records, spec), DataError);
  }
}

TEST_CASE("split override files load and apply") {
  testutil::TempDir dir;
  std::string path = dir.file("split.csv");
  testutil::write_text(path, "id,split\ncov_000,val\nneg_001,test\n");

  auto overrides = load_split_overrides(path);
  REQUIRE(overrides.size() == 2);
  CHECK(overrides.at("cov_000") == Split::kVal);
  CHECK(overrides.at("neg_001") == Split::kTest);

  auto records = labeled_records(2, 2);
  apply_split_overrides(records, overrides);
  CHECK(records[0].split == Split::kVal);
  CHECK_FALSE(records[1].split.has_value());
  CHECK(records[3].split == Split::kTest);

  SUBCASE("duplicate ids in the file are rejected") {
    std::string dup = dir.file("dup.csv");
    testutil::write_text(dup, "id,split\ncov_000,val\ncov_000,test\n");
    CHECK_THROWS_AS(load_split_overrides(dup), DataError);
  }

  SUBCASE("unknown ids are rejected") {
    auto few = labeled_records(1, 0);
    CHECK_THROWS_AS(apply_split_overrides(few, overrides), DataError);
  }

  SUBCASE("missing columns are rejected") {
    std::string bad = dir.file("bad.csv");
    testutil::write_text(bad, "id,subset\ncov_000,val\n");
    CHECK_THROWS_AS(load_split_overrides(bad), DataError);
  }
}

TEST_CASE("resolved manifests round trip") {
  SplitSpec spec;
  spec.train_pos = spec.train_neg = 1;
  spec.val_pos = spec.val_neg = 1;
  spec.test_pos = spec.test_neg = 1;
  auto resolved = make_splits(labeled_records(3, 3), spec);

  // an ineligible record travels along without label or split
  VideoRecord decoy;
  decoy.id = "decoy_001";
  decoy.file_path = "videos/decoy, raw.avi";  // exercises csv quoting
  decoy.original_class = OriginalClass::kOther;
  decoy.probe = Probe::kUnknown;
  resolved.push_back(decoy);

  testutil::TempDir dir;
  std::string path = dir.file("resolved_manifest.csv");
  write_resolved_manifest(path, resolved);
  auto loaded = load_resolved_manifest(path);

  REQUIRE(loaded.size() == resolved.size());
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    CHECK(loaded[i].id == resolved[i].id);
    CHECK(loaded[i].file_path == resolved[i].file_path);
    CHECK(loaded[i].original_class == resolved[i].original_class);
    CHECK(loaded[i].probe == resolved[i].probe);
    CHECK(loaded[i].binary_label == resolved[i].binary_label);
    CHECK(loaded[i].split == resolved[i].split);
  }

  SUBCASE("a plain manifest is not a resolved manifest") {
    std::string plain = dir.file("plain.csv");
    testutil::write_text(plain, "id,filename,class,probe\nv1,a.avi,covid,convex\n");
    CHECK_THROWS_AS(load_resolved_manifest(plain), DataError);
  }
}
