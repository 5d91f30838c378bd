#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gradnoise/rng.hpp"
#include "gradnoise/tensor.hpp"

namespace gradnoise::tasks {

/// Malformed or truncated data file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Files that parse individually but disagree with each other.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedProgram : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Split { kTrain, kTest };

struct Dataset {
  Tensor inputs;            // N x D
  std::vector<int> labels;  // N class indices
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label pair (raw or gzip-compressed). Images are
/// flattened row-major and scaled to [0, 1] by dividing by 255.
Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                   Split split = Split::kTrain);

/// Raw IDX writers, used for fixtures and conversions.
void write_idx_images(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// n examples drawn without replacement, in sampled order.
Dataset subset(const Dataset& dataset, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Single-column table questions.

/// Op vocabulary in tie-breaking order.
enum class Op { kGreater, kLesser, kCount, kSum, kNoOp };
inline constexpr std::size_t kOpCount = 5;

std::string_view op_name(Op op);
Op op_from_name(std::string_view name);
inline bool is_aggregator(Op op) { return op == Op::kCount || op == Op::kSum; }
inline bool is_comparison(Op op) { return op == Op::kGreater || op == Op::kLesser; }

struct Instruction {
  Op op = Op::kNoOp;
  double pivot = 0.0;  // used by Greater / Lesser

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

using Program = std::vector<Instruction>;

std::string program_string(const Program& program);

/// Sequential hard semantics with an accumulator: selection starts all-true,
/// Greater(a) keeps x > a, Lesser(b) keeps x < b, Count adds the number of
/// selected rows, Sum adds the sum of selected values, NoOp does nothing.
/// No well-formedness checks.
double execute_steps(const Tensor& column, std::span<const Instruction> steps);

/// Throws MalformedProgram unless the program is comparisons followed by
/// exactly one aggregator.
void validate_program(const Program& program);
double execute_program(const Tensor& column, const Program& program);

// Question encoding: kEncodingSlots token slots, each a one-hot over
// {greater, lesser, count, sum, pad}, then the greater and lesser pivots.
inline constexpr std::size_t kEncodingSlots = 3;
inline constexpr std::size_t kTokenVocab = 5;
inline constexpr std::size_t kEncodingDim = kEncodingSlots * kTokenVocab + 2;

struct TableQuestion {
  Tensor column;
  Program program;
  double answer = 0.0;
  double greater_pivot = 0.0;  // 0 when the program has no Greater
  double lesser_pivot = 0.0;   // 0 when the program has no Lesser
  Tensor encoding;
};

/// Builds pivots, encoding and answer from (column, program).
TableQuestion make_question(Tensor column, Program program);

struct TableTaskConfig {
  std::size_t n_examples = 1000;
  std::size_t column_len = 10;
  std::size_t min_depth = 1;  // program length including the aggregator
  std::size_t max_depth = 3;
  double value_range = 10.0;  // column values uniform in [-range, range]
};

/// Programs come from {[Agg], [Cmp(a), Agg], [Cmp(a), Cmp(b), Agg]}. A
/// depth-3 program uses one Greater and one Lesser, in either order, so each
/// comparison binds to its own pivot slot.
std::vector<TableQuestion> generate_table_task(Rng& rng, const TableTaskConfig& config);

/// One JSON object per line: {"column": [...], "program": [...], "answer": x}.
void write_table_jsonl(std::ostream& out, std::span<const TableQuestion> questions);
std::vector<TableQuestion> read_table_jsonl(std::istream& in);

/// Exact match for Count, relative error below 1e-4 for Sum.
bool answer_matches(const TableQuestion& question, double prediction);

}  // namespace gradnoise::tasks
