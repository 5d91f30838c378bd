#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gradnoise/tasks.hpp"
#include "support/program_oracle.hpp"

using namespace gradnoise;
using namespace gradnoise::tasks;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("gradnoise_tasks_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
            std::to_string(std::rand()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Program prog(std::initializer_list<Instruction> steps) { return Program(steps); }

}  // namespace

TEST_CASE("IDX loading") {
  TempDir dir;
  const auto images = dir.path / "images";
  const auto labels = dir.path / "labels";

  SUBCASE("header and pixel scaling") {
    std::vector<std::uint8_t> pixels(2 * 784, 0);
    pixels[0] = 255;
    pixels[784 + 5] = 51;
    write_idx_images(images, 28, 28, pixels);
    write_idx_labels(labels, std::vector<std::uint8_t>{3, 9});
    const auto bytes = read_bytes(images);
    CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 16) ==
          std::vector<std::uint8_t>{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28});
    const auto ds = load_mnist(images, labels);
    CHECK(ds.inputs.shape() == Shape(2, 784));
    CHECK(ds.inputs(0, 0) == 1.0);
    CHECK(ds.inputs(1, 5) == 0.2);
    CHECK(ds.labels == std::vector<int>{3, 9});
  }
  SUBCASE("round trip is bit-exact") {
    Rng rng(1);
    std::vector<std::uint8_t> pixels(7 * 12);
    for (auto& p : pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    std::vector<std::uint8_t> lab(7);
    for (auto& l : lab) l = static_cast<std::uint8_t>(rng.uniform_index(10));
    write_idx_images(images, 3, 4, pixels);
    write_idx_labels(labels, lab);
    const auto ds = load_mnist(images, labels, Split::kTest);
    CHECK(ds.split == Split::kTest);
    CHECK(ds.inputs.shape() == Shape(7, 12));
    for (std::size_t i = 0; i < pixels.size(); ++i) CHECK(ds.inputs.data()[i] == pixels[i] / 255.0);
    // writing back the recovered bytes reproduces the original files
    std::vector<std::uint8_t> again(pixels.size());
    for (std::size_t i = 0; i < again.size(); ++i)
      again[i] = static_cast<std::uint8_t>(std::lround(ds.inputs.data()[i] * 255.0));
    const auto copy = dir.path / "copy";
    write_idx_images(copy, 3, 4, again);
    CHECK(read_bytes(copy) == read_bytes(images));
  }
  SUBCASE("wrong magic names both values") {
    write_idx_images(images, 2, 2, std::vector<std::uint8_t>(8, 0));
    try {
      load_mnist(images, images);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("0x00000801") != std::string::npos);
      CHECK(msg.find("0x00000803") != std::string::npos);
    }
  }
  SUBCASE("truncated image data") {
    write_idx_images(images, 2, 2, std::vector<std::uint8_t>(8, 0));
    write_idx_labels(labels, std::vector<std::uint8_t>{1, 2});
    auto bytes = read_bytes(images);
    bytes.resize(bytes.size() - 3);
    write_bytes(images, bytes);
    CHECK_THROWS_AS(load_mnist(images, labels), FormatError);
    write_bytes(images, {0, 0, 8});
    CHECK_THROWS_AS(load_mnist(images, labels), FormatError);
  }
  SUBCASE("count mismatch between files") {
    write_idx_images(images, 2, 2, std::vector<std::uint8_t>(12, 0));
    write_idx_labels(labels, std::vector<std::uint8_t>{1, 2});
    CHECK_THROWS_AS(load_mnist(images, labels), ConsistencyError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_mnist(dir.path / "nope", labels));
  }
}

TEST_CASE("bundled MNIST files load") {
  const std::filesystem::path dir = GRADNOISE_MNIST_DIR;
  const auto train = load_mnist(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz");
  CHECK(train.inputs.shape() == Shape(8000, 784));
  CHECK(train.size() == 8000);
  const auto [lo, hi] = std::minmax_element(train.inputs.data().begin(), train.inputs.data().end());
  CHECK(*lo == 0.0);
  CHECK(*hi == 1.0);
  std::map<int, int> counts;
  for (int l : train.labels) ++counts[l];
  CHECK(counts.size() == 10);
  CHECK(counts.begin()->first == 0);
  CHECK(counts.rbegin()->first == 9);
}

TEST_CASE("subset") {
  Dataset ds;
  const std::size_t n = 5000;
  ds.inputs = Tensor(Shape(n, 2));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.inputs(i, 0) = static_cast<double>(i);
    ds.labels[i] = static_cast<int>(i % 10);
  }
  SUBCASE("full size is a permutation") {
    Rng rng(1);
    const auto s = subset(ds, n, rng);
    std::vector<double> ids(s.inputs.rows());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ids[i] = s.inputs(i, 0);
      CHECK(s.labels[i] == static_cast<int>(ids[i]) % 10);
    }
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(ids[i] == double(i));
  }
  SUBCASE("errors") {
    Rng rng(1);
    CHECK_THROWS_AS(subset(ds, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(subset(ds, n + 1, rng), std::invalid_argument);
  }
  SUBCASE("same seed, same subset") {
    Rng a(9), b(9);
    CHECK(subset(ds, 100, a).inputs == subset(ds, 100, b).inputs);
  }
  SUBCASE("label counts within 3 sigma of the multinomial expectation") {
    Rng rng(4);
    const std::size_t k = 1000;
    const auto s = subset(ds, k, rng);
    std::vector<int> counts(10, 0);
    for (int l : s.labels) ++counts[l];
    // hypergeometric variance is below the multinomial one
    const double sd = std::sqrt(k * 0.1 * 0.9);
    for (int c : counts) CHECK(std::abs(c - 100.0) < 3.0 * sd);
    std::vector<double> ids;
    for (std::size_t i = 0; i < k; ++i) ids.push_back(s.inputs(i, 0));
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  }
}

TEST_CASE("execute_program examples") {
  const auto col = Tensor::vector({1, 5, 9});
  CHECK(execute_program(col, prog({{Op::kGreater, 4}, {Op::kCount}})) == 2.0);
  CHECK(execute_program(col, prog({{Op::kGreater, 4}, {Op::kLesser, 8}, {Op::kCount}})) == 1.0);
  CHECK(execute_program(col, prog({{Op::kSum}})) == 15.0);
  CHECK(execute_program(Tensor(Shape(10), 3.0), prog({{Op::kCount}})) == 10.0);
  CHECK(execute_program(Tensor::vector({-10, 0, 10}), prog({{Op::kGreater, 11}, {Op::kCount}})) == 0.0);
  CHECK(program_string(prog({{Op::kGreater, 4}, {Op::kCount}})) == "Greater(4) Count");
}

TEST_CASE("malformed programs") {
  const auto col = Tensor::vector({1, 2});
  CHECK_THROWS_AS(execute_program(col, {}), MalformedProgram);
  CHECK_THROWS_AS(execute_program(col, prog({{Op::kGreater, 1}})), MalformedProgram);
  CHECK_THROWS_AS(execute_program(col, prog({{Op::kCount}, {Op::kGreater, 1}})), MalformedProgram);
  CHECK_THROWS_AS(execute_program(col, prog({{Op::kCount}, {Op::kSum}})), MalformedProgram);
  CHECK_THROWS_AS(execute_program(col, prog({{Op::kNoOp}, {Op::kCount}})), MalformedProgram);
  CHECK_THROWS_AS(op_from_name("And"), std::invalid_argument);
  for (Op op : {Op::kGreater, Op::kLesser, Op::kCount, Op::kSum, Op::kNoOp}) CHECK(op_from_name(op_name(op)) == op);
}

TEST_CASE("execute_program agrees with brute-force evaluation") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(15);
    std::vector<double> values(n);
    for (double& v : values) v = rng.uniform(-10.0, 10.0);
    const auto program = oracle::random_program(rng, 11.0);
    CHECK(execute_program(Tensor(Shape(n), values), program) == oracle::brute_force(values, program));
  }
}

TEST_CASE("execute_program is permutation-equivariant") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> values(10);
    for (double& v : values) v = std::round(rng.uniform(-10.0, 10.0) * 4.0) / 4.0;  // exact sums
    const auto program = oracle::random_program(rng, 10.0);
    const double before = execute_program(Tensor(Shape(10), values), program);
    for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[rng.uniform_index(i)]);
    CHECK(execute_program(Tensor(Shape(10), values), program) == before);
  }
}

TEST_CASE("generate_table_task") {
  SUBCASE("questions are self-consistent") {
    Rng rng(3);
    TableTaskConfig cfg;
    cfg.n_examples = 2000;
    const auto qs = generate_table_task(rng, cfg);
    CHECK(qs.size() == 2000);
    std::map<std::size_t, int> depths;
    for (const auto& q : qs) {
      CHECK(q.column.size() == 10);
      for (double v : q.column.data()) CHECK(std::abs(v) <= 10.0);
      CHECK(q.answer == execute_program(q.column, q.program));
      CHECK(q.encoding.size() == kEncodingDim);
      ++depths[q.program.size()];
      for (const auto& ins : q.program) {
        if (!is_comparison(ins.op)) continue;
        CHECK(std::abs(ins.pivot) <= 10.0);
        CHECK(std::abs(ins.pivot * 100.0 - std::round(ins.pivot * 100.0)) < 1e-9);
      }
    }
    CHECK(depths.size() == 3);
    for (auto [d, c] : depths) CHECK(c > 500);
  }
  SUBCASE("depth range is honoured") {
    Rng rng(4);
    TableTaskConfig cfg;
    cfg.n_examples = 300;
    cfg.min_depth = 2;
    cfg.max_depth = 2;
    for (const auto& q : generate_table_task(rng, cfg)) {
      CHECK(q.program.size() == 2);
      CHECK(is_comparison(q.program[0].op));
    }
  }
  SUBCASE("invalid arguments") {
    Rng rng(5);
    TableTaskConfig cfg;
    cfg.max_depth = 4;
    CHECK_THROWS_AS(generate_table_task(rng, cfg), std::invalid_argument);
    cfg.max_depth = 2;
    cfg.min_depth = 0;
    CHECK_THROWS_AS(generate_table_task(rng, cfg), std::invalid_argument);
    cfg.min_depth = 1;
    cfg.column_len = 1;
    CHECK_THROWS_AS(generate_table_task(rng, cfg), std::invalid_argument);
  }
  SUBCASE("deterministic per seed") {
    Rng a(6), b(6);
    TableTaskConfig cfg;
    cfg.n_examples = 50;
    const auto qa = generate_table_task(a, cfg);
    const auto qb = generate_table_task(b, cfg);
    for (std::size_t i = 0; i < qa.size(); ++i) {
      CHECK(qa[i].column == qb[i].column);
      CHECK(qa[i].program == qb[i].program);
      CHECK(qa[i].encoding == qb[i].encoding);
    }
  }
}

TEST_CASE("question encoding") {
  const auto q = make_question(Tensor::vector({1, 5, 9}), prog({{Op::kLesser, 8}, {Op::kGreater, 4}, {Op::kCount}}));
  // slots: lesser, greater, count; then greater and lesser pivots
  std::vector<double> expected(kEncodingDim, 0.0);
  expected[0 * kTokenVocab + 1] = 1.0;
  expected[1 * kTokenVocab + 0] = 1.0;
  expected[2 * kTokenVocab + 2] = 1.0;
  expected[15] = 4.0;
  expected[16] = 8.0;
  CHECK(q.encoding == Tensor(Shape(kEncodingDim), expected));
  CHECK(q.answer == 1.0);

  const auto sum_only = make_question(Tensor::vector({1, 2}), prog({{Op::kSum}}));
  CHECK(sum_only.encoding[4] == 0.0);
  CHECK(sum_only.encoding[3] == 1.0);
  CHECK(sum_only.encoding[1 * kTokenVocab + 4] == 1.0);
  CHECK(sum_only.encoding[2 * kTokenVocab + 4] == 1.0);

  CHECK_THROWS_AS(make_question(Tensor::vector({1, 2}), prog({{Op::kGreater, 0}, {Op::kGreater, 1}, {Op::kCount}})),
                  MalformedProgram);
}

TEST_CASE("answer_matches") {
  const auto count = make_question(Tensor::vector({1, 5, 9}), prog({{Op::kCount}}));
  CHECK(answer_matches(count, 3.0));
  CHECK(answer_matches(count, 3.0 + 5e-7));
  CHECK_FALSE(answer_matches(count, 3.0 + 2e-6));
  const auto sum = make_question(Tensor::vector({100, 200, 300}), prog({{Op::kSum}}));
  CHECK(answer_matches(sum, 600.0 * (1.0 + 5e-5)));
  CHECK_FALSE(answer_matches(sum, 600.0 * (1.0 + 2e-4)));
}

TEST_CASE("table JSONL round trip") {
  Rng rng(8);
  TableTaskConfig cfg;
  cfg.n_examples = 40;
  const auto qs = generate_table_task(rng, cfg);
  std::stringstream buf;
  write_table_jsonl(buf, qs);
  const auto back = read_table_jsonl(buf);
  REQUIRE(back.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(back[i].column == qs[i].column);
    CHECK(back[i].program == qs[i].program);
    CHECK(back[i].answer == qs[i].answer);
  }

  std::stringstream bad("{\"column\": [1, 2], \"program\": [{\"op\": \"Count\"}], \"answer\": 5}\n");
  CHECK_THROWS_AS(read_table_jsonl(bad), ConsistencyError);
  std::stringstream garbage("{not json\n");
  CHECK_THROWS_AS(read_table_jsonl(garbage), FormatError);
}
