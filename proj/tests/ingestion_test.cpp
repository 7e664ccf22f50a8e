#include "reprstruct/ingestion.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <limits>
#include <random>

#include "test_support.hpp"

namespace reprstruct {
namespace {

using testing::slurp;
using testing::TempDir;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::invalid_data;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected an Error";
  return {};
}

bool bit_identical(const RepresentationBatch& a, const RepresentationBatch& b) {
  return a.rows() == b.rows() && a.dims() == b.dims() &&
         std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(double)) == 0;
}

// Random float32 bit patterns restricted to finite values.
RepresentationBatch random_float_batch(std::size_t rows, std::size_t dims, std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::vector<double> v(rows * dims);
  for (auto& x : v) {
    float f;
    do {
      f = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    } while (!std::isfinite(f));
    x = f;
  }
  return RepresentationBatch(rows, dims, std::move(v));
}

std::string hrep_header(std::uint32_t dims, std::uint64_t rows) {
  std::string s = "HREP1\n";
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((dims >> (8 * i)) & 0xff));
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((rows >> (8 * i)) & 0xff));
  return s;
}

TEST(Hrep, HeaderLayoutIsLittleEndian) {
  RepresentationBatch b(3, 2, {1, 2, 3, 4, 5, 6});
  std::string bytes = encode_reps(b);
  ASSERT_EQ(bytes.size(), 18u + 24u);
  EXPECT_EQ(bytes.substr(0, 18), hrep_header(2, 3));
  // 1.0f = 0x3f800000, little-endian.
  EXPECT_EQ(bytes.substr(18, 4), std::string("\x00\x00\x80\x3f", 4));
  auto back = parse_reps(bytes);
  EXPECT_EQ(back.rows(), 3u);
  EXPECT_EQ(back.dims(), 2u);
  EXPECT_EQ(back(2, 1), 6.0);
}

TEST(Hrep, TruncatedPayloadNamesExpectedBytes) {
  std::string bytes = hrep_header(2, 3) + std::string(23, '\0');
  auto msg = message_of([&] { parse_reps(bytes, "x.hrep"); });
  EXPECT_NE(msg.find("expected 24"), std::string::npos);
  EXPECT_NE(msg.find("got 23"), std::string::npos);
  EXPECT_EQ(code_of([&] { parse_reps(bytes); }), ErrorCode::format_error);
}

TEST(Hrep, BadMagic) {
  std::string bytes = hrep_header(1, 1) + std::string(4, '\0');
  bytes[0] = 'X';
  EXPECT_NE(message_of([&] { parse_reps(bytes); }).find("bad magic"), std::string::npos);
  EXPECT_EQ(code_of([] { parse_reps(""); }), ErrorCode::format_error);
}

TEST(Hrep, TruncatedHeaderAndTrailingBytes) {
  EXPECT_EQ(code_of([] { parse_reps(std::string("HREP1\n\x01\x00", 8)); }), ErrorCode::format_error);
  std::string extra = hrep_header(1, 1) + std::string(5, '\0');
  EXPECT_NE(message_of([&] { parse_reps(extra); }).find("trailing"), std::string::npos);
}

TEST(Hrep, EmptyMatrixInHeaderIsRejected) {
  EXPECT_EQ(code_of([] { parse_reps(hrep_header(0, 0)); }), ErrorCode::invalid_data);
  EXPECT_EQ(code_of([] { parse_reps(hrep_header(4, 0)); }), ErrorCode::invalid_data);
}

TEST(Hrep, NonFiniteValueReportsLocation) {
  std::string bytes = hrep_header(2, 2);
  float vals[] = {0.0f, 1.0f, std::numeric_limits<float>::infinity(), 2.0f};
  for (float f : vals) {
    auto u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  auto msg = message_of([&] { parse_reps(bytes, "bad.hrep"); });
  EXPECT_NE(msg.find("row 1, dim 0"), std::string::npos);
  EXPECT_NE(msg.find("bad.hrep"), std::string::npos);
}

TEST(Hrep, RoundTripIsBitExact) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    auto b = random_float_batch(1 + rng() % 20, 1 + rng() % 6, seed);
    auto path = dir / "b.hrep";
    write_reps(b, path);
    EXPECT_TRUE(bit_identical(read_reps(path), b)) << "seed " << seed;
  }
}

TEST(Hrep, SubnormalsAndSignedZeroSurvive) {
  RepresentationBatch b(1, 4,
                        {std::numeric_limits<float>::denorm_min(), -std::numeric_limits<float>::denorm_min(), -0.0,
                         std::numeric_limits<float>::max()});
  EXPECT_TRUE(bit_identical(parse_reps(encode_reps(b)), b));
}

TEST(Hrep, ZeroRowBatchIsRejected) {
  EXPECT_EQ(code_of([] { RepresentationBatch(0, 3, {}); }), ErrorCode::invalid_data);
  EXPECT_EQ(code_of([] { encode_reps(RepresentationBatch{}); }), ErrorCode::invalid_data);
}

TEST(Hrep, ValueOutsideFloatRangeIsRejected) {
  EXPECT_EQ(code_of([] { encode_reps(RepresentationBatch(1, 1, {1e300})); }), ErrorCode::invalid_data);
}

TEST(Hrep, MissingFileIsIoError) {
  TempDir dir;
  auto msg = message_of([&] { read_reps(dir / "nope.hrep"); });
  EXPECT_NE(msg.find("nope.hrep"), std::string::npos);
  EXPECT_EQ(code_of([&] { read_reps(dir / "nope.hrep"); }), ErrorCode::io_error);
}

void write_npy(const fs::path& path, const std::string& descr, const std::string& shape, bool fortran,
               const std::vector<float>& data) {
  std::string header = "{'descr': '" + descr + "', 'fortran_order': " + (fortran ? "True" : "False") +
                       ", 'shape': " + shape + ", }";
  while ((10 + header.size() + 1) % 64 != 0) header.push_back(' ');
  header.push_back('\n');
  std::string bytes = "\x93NUMPY";
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  bytes.push_back(static_cast<char>(header.size() & 0xff));
  bytes.push_back(static_cast<char>(header.size() >> 8));
  bytes += header;
  bytes.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  std::ofstream(path, std::ios::binary) << bytes;
}

TEST(Npy, ImportsFloat32Matrix) {
  TempDir dir;
  write_npy(dir / "a.npy", "<f4", "(2, 3)", false, {1, 2, 3, 4, 5, 6.5f});
  auto b = load_batch(dir / "a.npy");
  EXPECT_EQ(b.rows(), 2u);
  EXPECT_EQ(b.dims(), 3u);
  EXPECT_EQ(b(1, 2), 6.5);
}

TEST(Npy, RejectsOtherLayouts) {
  TempDir dir;
  write_npy(dir / "f8.npy", "<f8", "(1, 1)", false, {0, 0});
  write_npy(dir / "fortran.npy", "<f4", "(1, 1)", true, {0});
  write_npy(dir / "one_d.npy", "<f4", "(3,)", false, {0, 0, 0});
  write_npy(dir / "short.npy", "<f4", "(2, 2)", false, {0, 0, 0});
  for (const char* name : {"f8.npy", "fortran.npy", "one_d.npy", "short.npy"}) {
    EXPECT_EQ(code_of([&] { read_npy(dir / name); }), ErrorCode::format_error) << name;
  }
}

TEST(CsvMatrix, ImportsAndValidates) {
  TempDir dir;
  std::ofstream(dir / "a.csv") << "1,2\n3.5,-4\n";
  auto b = load_batch(dir / "a.csv");
  EXPECT_EQ(b, RepresentationBatch(2, 2, {1, 2, 3.5, -4}));
  std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
  EXPECT_EQ(code_of([&] { read_csv_matrix(dir / "ragged.csv"); }), ErrorCode::format_error);
  std::ofstream(dir / "word.csv") << "1,x\n";
  EXPECT_EQ(code_of([&] { read_csv_matrix(dir / "word.csv"); }), ErrorCode::format_error);
}

TEST(Tokens, ParsesFineprintRecord) {
  std::istringstream in(R"({"sentence_id":0,"tokens":["the","fine","print"],"pos":["DET","ADJ","NOUN"]})");
  auto records = parse_tokens(in, "t.jsonl");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].tokens.size(), 3u);
  EXPECT_EQ(records[0].pos, (std::vector<std::string>{"DET", "ADJ", "NOUN"}));
  EXPECT_EQ(total_tokens(records), 3u);
}

TEST(Tokens, PosLengthMismatchNamesLine) {
  std::istringstream in("{\"sentence_id\":0,\"tokens\":[\"a\"]}\n"
                        "{\"sentence_id\":1,\"tokens\":[\"a\",\"b\",\"c\"],\"pos\":[\"X\",\"Y\"]}\n");
  try {
    parse_tokens(in, "t.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::alignment_error);
    EXPECT_NE(std::string(e.what()).find("t.jsonl:2"), std::string::npos);
  }
}

TEST(Tokens, MalformedLineNamesLine) {
  std::istringstream in("{\"sentence_id\":0,\"tokens\":[\"a\"]}\n\n{oops\n");
  auto msg = message_of([&] { parse_tokens(in, "t.jsonl"); });
  EXPECT_NE(msg.find("t.jsonl:3"), std::string::npos);
}

TEST(Tokens, PosIsOptional) {
  std::istringstream in("{\"sentence_id\":4,\"tokens\":[\"a\",\"b\"]}\n");
  auto records = parse_tokens(in, "t");
  EXPECT_FALSE(records[0].pos);
}

TEST(Tokens, RoundTripWithLabelColumns) {
  TempDir dir;
  SentenceRecord r;
  r.sentence_id = 12;
  r.tokens = {"a", "\"quoted\"", "ünï"};
  r.pos = std::vector<std::string>{"X", "Y", "Z"};
  r.labels["context"] = {"c0", "c1", "c0"};
  SentenceRecord plain;
  plain.sentence_id = 13;
  plain.tokens = {"b"};
  write_tokens({r, plain}, dir / "t.jsonl");
  auto back = read_tokens(dir / "t.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);
  EXPECT_EQ(back[1], plain);
}

TEST(Alignment, TokensMustMatchRows) {
  SentenceRecord r;
  r.tokens = {"the", "fine", "print"};
  EXPECT_NO_THROW(validate_alignment(3, {r}));
  EXPECT_EQ(message_of([&] { validate_alignment(4, {r}); }), "tokens=3 rows=4");
  EXPECT_EQ(code_of([&] { validate_alignment(4, {r}); }), ErrorCode::alignment_error);
  EXPECT_EQ(code_of([] { validate_alignment(1, {}); }), ErrorCode::alignment_error);
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream(dir / "tokens.jsonl") << "{\"sentence_id\":0,\"tokens\":[\"a\"]}\n";
    for (int step : {100, 1000, 10000}) {
      write_reps(RepresentationBatch(1, 1, {0.5}), dir / ("r" + std::to_string(step) + ".hrep"));
    }
  }
  fs::path write(const std::string& text) {
    auto p = dir / "manifest.json";
    std::ofstream(p) << text;
    return p;
  }
  TempDir dir;
};

TEST_F(ManifestTest, ValidManifestResolvesRelativePaths) {
  auto p = write(R"({"run_id":"r1","seed":3,"tokens_path":"tokens.jsonl","checkpoints":[
    {"step":100,"reps_path":"r100.hrep","loss":2.5},
    {"step":1000,"reps_path":"r1000.hrep","loss":1.0,"gen_acc":0.4},
    {"step":10000,"reps_path":"r10000.hrep","loss":0.1,"gen_acc":0.9}]})");
  auto m = read_manifest(p);
  EXPECT_EQ(m.run_id, "r1");
  EXPECT_EQ(m.seed, 3);
  ASSERT_EQ(m.checkpoints.size(), 3u);
  EXPECT_EQ(m.checkpoints[2].step, 10000);
  EXPECT_EQ(m.checkpoints[0].reps_path, dir / "r100.hrep");
  EXPECT_FALSE(m.checkpoints[0].gen_acc);
  EXPECT_EQ(m.checkpoints[1].gen_acc, 0.4);

  write_manifest(m, dir / "copy.json");
  auto again = read_manifest(dir / "copy.json");
  EXPECT_EQ(again.checkpoints[1].reps_path, m.checkpoints[1].reps_path);
  EXPECT_EQ(again.checkpoints[2].loss, 0.1);
}

TEST_F(ManifestTest, StepsMustIncrease) {
  auto p = write(R"({"run_id":"r","seed":0,"tokens_path":"tokens.jsonl","checkpoints":[
    {"step":100,"reps_path":"r100.hrep","loss":1},{"step":100,"reps_path":"r1000.hrep","loss":1}]})");
  auto msg = message_of([&] { read_manifest(p); });
  EXPECT_NE(msg.find("strictly increasing"), std::string::npos);
}

TEST_F(ManifestTest, MissingReportsFileNamesStep) {
  auto p = write(R"({"run_id":"r","seed":0,"tokens_path":"tokens.jsonl","checkpoints":[
    {"step":100,"reps_path":"r100.hrep","loss":1},{"step":1000,"reps_path":"gone.hrep","loss":1}]})");
  auto msg = message_of([&] { read_manifest(p); });
  EXPECT_NE(msg.find("step 1000"), std::string::npos);
  EXPECT_NE(msg.find("gone.hrep"), std::string::npos);
}

TEST_F(ManifestTest, MissingFieldsAndBadValues) {
  EXPECT_EQ(code_of([&] { read_manifest(write(R"({"seed":0,"tokens_path":"tokens.jsonl","checkpoints":[]})")); }),
            ErrorCode::invalid_data);
  EXPECT_NE(message_of([&] {
              read_manifest(write(R"({"run_id":"r","seed":0,"tokens_path":"tokens.jsonl","checkpoints":[
                {"step":1,"reps_path":"r100.hrep"}]})"));
            }).find("'loss'"),
            std::string::npos);
  EXPECT_EQ(code_of([&] { read_manifest(write("{not json")); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([&] { read_manifest(dir / "absent.json"); }), ErrorCode::io_error);
}

TEST_F(ManifestTest, SeparatePosFileIsMerged) {
  std::ofstream(dir / "pos.jsonl") << "{\"sentence_id\":0,\"tokens\":[\"a\"],\"pos\":[\"DET\"]}\n";
  auto p = write(R"({"run_id":"r","seed":0,"tokens_path":"tokens.jsonl","pos_path":"pos.jsonl",
    "checkpoints":[{"step":1,"reps_path":"r100.hrep","loss":1}]})");
  auto records = load_manifest_records(read_manifest(p));
  EXPECT_EQ(records[0].pos, std::vector<std::string>{"DET"});
}

}  // namespace
}  // namespace reprstruct
