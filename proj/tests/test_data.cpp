#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "prism/data/dataset_io.hpp"
#include "prism/data/record.hpp"
#include "prism/data/split.hpp"
#include "support.hpp"

using namespace prism;
using namespace prism::data;
using prism::testing::read_bytes;
using prism::testing::TempDir;

namespace {

GeneRecord random_record(const std::string& id, const std::string& chrom, std::mt19937_64& rng, Eigen::Index L = 16,
                         Eigen::Index d = 3, std::size_t k = 2) {
  static const char bases[] = "ATCGNatcg";
  std::uniform_int_distribution<int> pick(0, 8);
  std::uniform_real_distribution<float> u(0.0f, 5.0f);
  std::string s;
  for (Eigen::Index i = 0; i < L; ++i) s.push_back(bases[pick(rng)]);
  GeneRecord r;
  r.gene_id = id;
  r.chromosome = chrom;
  r.tss = static_cast<std::int64_t>(rng() % 100000);
  r.X = encode_sequence(s);
  r.S.resize(L, d);
  for (Eigen::Index i = 0; i < r.S.size(); ++i) r.S.data()[i] = u(rng) * 1.37e-3f;
  r.y = std::uniform_real_distribution<float>(-2.0f, 9.0f)(rng);
  for (std::size_t j = 0; j < k; ++j) r.aux.push_back(u(rng) - 2.5f);
  return r;
}

bool same_bits(const Matrix<float>& a, const Matrix<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(EncodeSequence, SingleBases) {
  Matrix<float> a = encode_sequence("A");
  EXPECT_EQ(a.rows(), 1);
  EXPECT_EQ(a(0, 0), 1.0f);
  EXPECT_EQ(a.row(0).sum(), 1.0f);
  EXPECT_TRUE(encode_sequence("N").isZero());
}

TEST(EncodeSequence, ATCGIsIdentity) {
  EXPECT_EQ(encode_sequence("ATCG"), Matrix<float>::Identity(4, 4));
}

TEST(EncodeSequence, CaseInsensitive) {
  std::string s = "ATTGCNNCGTAAGC";
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  EXPECT_EQ(encode_sequence(s), encode_sequence(lower));
}

TEST(EncodeSequence, RejectsOtherCharactersWithPosition) {
  try {
    encode_sequence("ACGTX");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  EXPECT_THROW(encode_sequence("AC GT"), ParseError);
}

TEST(EncodeSequence, RowSumsAreZeroOrOne) {
  auto X = encode_sequence("ANTNCGGAn");
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const float s = X.row(i).sum();
    EXPECT_TRUE(s == 0.0f || s == 1.0f);
  }
  EXPECT_EQ(decode_sequence(X), "ANTNCGGAN");
}

TEST(Window, CentredSliceWithoutPadding) {
  std::string contig;
  for (int i = 0; i < 1000; ++i) contig.push_back("ATCG"[i % 4]);
  Matrix<float> sig(1000, 2);
  for (Eigen::Index i = 0; i < 1000; ++i) sig.row(i) << static_cast<float>(i), 1.0f;
  auto [X, S] = window_around_tss(contig, sig, 500, 100);
  EXPECT_EQ(X, encode_sequence(std::string_view(contig).substr(450, 100)));
  EXPECT_EQ(S(0, 0), 450.0f);
  EXPECT_EQ(S(99, 0), 549.0f);
}

TEST(Window, LeftEdgePadding) {
  std::string contig(1000, 'G');
  Matrix<float> sig = Matrix<float>::Ones(1000, 3);
  auto [X, S] = window_around_tss(contig, sig, 10, 100);
  // Window [-40, 60): 40 padded rows.
  EXPECT_TRUE(X.topRows(40).isZero());
  EXPECT_TRUE(S.topRows(40).isZero());
  EXPECT_EQ(X.row(40).sum(), 1.0f);
  EXPECT_TRUE(S.bottomRows(60).isOnes());
}

TEST(Window, RightEdgeAndShapes) {
  std::string contig(3000, 'A');
  Matrix<float> sig = Matrix<float>::Ones(3000, 3);
  auto [X, S] = window_around_tss(contig, sig, 2990, 2000);
  EXPECT_EQ(X.rows(), 2000);
  EXPECT_EQ(X.cols(), 4);
  EXPECT_EQ(S.rows(), 2000);
  EXPECT_EQ(S.cols(), 3);
  EXPECT_TRUE(X.bottomRows(990).isZero());
  EXPECT_THROW(window_around_tss(contig, sig, 10, 0), ContractViolation);
  EXPECT_THROW(window_around_tss(contig, sig, 10, -4), ContractViolation);
}

TEST(Split, DefaultChromosomes) {
  EXPECT_EQ(assign_part(SplitSpec{}, "chr3"), Part::validation);
  EXPECT_EQ(assign_part(SplitSpec{}, "21"), Part::validation);
  EXPECT_EQ(assign_part(SplitSpec{}, "chr22"), Part::test);
  EXPECT_EQ(assign_part(SplitSpec{}, "chrX"), Part::test);
  EXPECT_EQ(assign_part(SplitSpec{}, "chr1"), Part::train);
}

TEST(Split, PartitionIsExhaustiveDisjointAndSorted) {
  std::mt19937_64 rng(11);
  const char* chroms[] = {"chr1", "chr3", "chr21", "chr22", "chrX", "chr7", "2"};
  std::vector<GeneRecord> recs;
  for (int i = 0; i < 70; ++i) recs.push_back(random_record("g" + std::to_string((i * 37) % 70), chroms[i % 7], rng, 4));
  auto parts = split(recs);
  std::set<std::string> seen;
  for (const auto* part : {&parts.train, &parts.validation, &parts.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end(),
                               [](const GeneRecord& a, const GeneRecord& b) { return a.gene_id < b.gene_id; }));
    for (const auto& r : *part) EXPECT_TRUE(seen.insert(r.gene_id).second);
  }
  EXPECT_EQ(seen.size(), recs.size());
  EXPECT_EQ(parts.validation.size(), 20u);
  EXPECT_EQ(parts.test.size(), 20u);
}

TEST(Split, OverlappingSetsAreRejected) {
  SplitSpec s;
  s.test_chromosomes.insert("3");
  EXPECT_THROW(s.validate(), ContractViolation);
}

TEST(Normalization, NinetyNinthPercentile) {
  std::vector<GeneRecord> recs(1);
  recs[0].S.resize(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) recs[0].S.row(i) << static_cast<float>(i + 1), 0.0f;
  auto scales = normalize_signals(recs);
  EXPECT_EQ(scales[0], 198.0f);  // nearest rank ceil(0.99 * 200) = 198
  EXPECT_EQ(scales[1], 1.0f);
  EXPECT_FLOAT_EQ(recs[0].S(197, 0), 1.0f);
}

TEST(Dataset, RoundTripIsBitExact) {
  TempDir dir("ds");
  std::mt19937_64 rng(21);
  Dataset ds;
  ds.meta.signal_scales = {1.5f, 0.25f, 3.0f};
  ds.meta.track_names = {"fg", "bg1", "bg2"};
  ds.meta.aux_names = {"half_life", "promoter"};
  for (int i = 0; i < 10; ++i) ds.records.push_back(random_record("gene" + std::to_string(i), "chr" + std::to_string(i + 1), rng));
  save_dataset(ds, dir.str());
  auto back = load_dataset(dir.str());
  ASSERT_EQ(back.records.size(), 10u);
  EXPECT_EQ(back.meta.signal_scales, ds.meta.signal_scales);
  EXPECT_EQ(back.meta.track_names, ds.meta.track_names);
  EXPECT_EQ(back.meta.aux_names, ds.meta.aux_names);
  EXPECT_EQ(back.meta.target_transform, "log1p");
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& a = ds.records[i];
    const auto& b = back.records[i];
    EXPECT_EQ(a.gene_id, b.gene_id);
    EXPECT_EQ(a.chromosome, b.chromosome);
    EXPECT_EQ(a.tss, b.tss);
    EXPECT_EQ(std::memcmp(&a.y, &b.y, sizeof(float)), 0);
    EXPECT_TRUE(same_bits(a.X, b.X));
    EXPECT_TRUE(same_bits(a.S, b.S));
    ASSERT_EQ(a.aux.size(), b.aux.size());
    EXPECT_EQ(std::memcmp(a.aux.data(), b.aux.data(), a.aux.size() * sizeof(float)), 0);
  }
}

TEST(Dataset, TruncatedSignalFileIsAFormatError) {
  TempDir dir("ds-trunc");
  std::mt19937_64 rng(2);
  Dataset ds;
  ds.records.push_back(random_record("a", "chr1", rng));
  save_dataset(ds, dir.str());
  const std::string sig = dir / "sig/g000000.prsg";
  std::string bytes = read_bytes(sig);
  std::ofstream(sig, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 5);
  try {
    load_dataset(dir.str());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(e.file().find("g000000.prsg"), std::string::npos);
  }
}

TEST(Dataset, BadMagicIsAFormatError) {
  TempDir dir("ds-magic");
  std::mt19937_64 rng(2);
  Dataset ds;
  ds.records.push_back(random_record("a", "chr1", rng));
  save_dataset(ds, dir.str());
  const std::string sig = dir / "sig/g000000.prsg";
  std::string bytes = read_bytes(sig);
  bytes[1] = 'Z';
  std::ofstream(sig, std::ios::binary | std::ios::trunc) << bytes;
  try {
    load_dataset(dir.str());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Dataset, DuplicateGeneIdIsAValidationError) {
  TempDir dir("ds-dup");
  std::mt19937_64 rng(4);
  Dataset ds;
  ds.records.push_back(random_record("a", "chr1", rng));
  ds.records.push_back(random_record("b", "chr2", rng));
  save_dataset(ds, dir.str());
  std::string manifest = read_bytes(dir / "manifest.tsv");
  const auto pos = manifest.rfind("\nb\t");
  manifest.replace(pos + 1, 1, "a");
  std::ofstream(dir / "manifest.tsv", std::ios::binary | std::ios::trunc) << manifest;
  EXPECT_THROW(load_dataset(dir.str()), ValidationError);
  ds.records[1].gene_id = "a";
  EXPECT_THROW(save_dataset(ds, dir / "other"), ValidationError);
}

TEST(Dataset, NegativeSignalIsRejectedAtLoad) {
  TempDir dir("ds-neg");
  std::mt19937_64 rng(8);
  Dataset ds;
  ds.records.push_back(random_record("a", "chr1", rng));
  ds.records[0].S(3, 1) = -0.5f;
  save_dataset(ds, dir.str());
  EXPECT_THROW(load_dataset(dir.str()), ValidationError);
}

TEST(Dataset, MixedWindowLengthsAreRejected) {
  TempDir dir("ds-len");
  std::mt19937_64 rng(8);
  Dataset ds;
  ds.records.push_back(random_record("a", "chr1", rng, 16));
  ds.records.push_back(random_record("b", "chr1", rng, 18));
  save_dataset(ds, dir.str());
  EXPECT_THROW(load_dataset(dir.str()), FormatError);
}

TEST(Dataset, BadHeaderNamesTheOffset) {
  TempDir dir("ds-header");
  std::ofstream(dir / "manifest.tsv") << "#prism-manifest\t1\nid\tchromosome\n";
  try {
    load_dataset(dir.str());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 18u);
  }
}
