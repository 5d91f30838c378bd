#include <json.hpp>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "gradnoise/tasks.hpp"

namespace gradnoise::tasks {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kGreater: return "Greater";
    case Op::kLesser: return "Lesser";
    case Op::kCount: return "Count";
    case Op::kSum: return "Sum";
    case Op::kNoOp: return "NoOp";
  }
  return "?";
}

Op op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpCount; ++i) {
    const auto op = static_cast<Op>(i);
    if (op_name(op) == name) return op;
  }
  throw std::invalid_argument("unknown op '" + std::string(name) + "'");
}

std::string program_string(const Program& program) {
  std::ostringstream os;
  for (std::size_t i = 0; i < program.size(); ++i) {
    if (i) os << ' ';
    os << op_name(program[i].op);
    if (is_comparison(program[i].op)) os << '(' << program[i].pivot << ')';
  }
  return os.str();
}

double execute_steps(const Tensor& column, std::span<const Instruction> steps) {
  const auto x = column.data();
  std::vector<char> selected(x.size(), 1);
  double acc = 0.0;
  for (const auto& step : steps) {
    switch (step.op) {
      case Op::kGreater:
        for (std::size_t i = 0; i < x.size(); ++i) selected[i] = selected[i] && x[i] > step.pivot;
        break;
      case Op::kLesser:
        for (std::size_t i = 0; i < x.size(); ++i) selected[i] = selected[i] && x[i] < step.pivot;
        break;
      case Op::kCount: {
        double count = 0.0;
        for (char s : selected) count += s ? 1.0 : 0.0;
        acc += count;
        break;
      }
      case Op::kSum: {
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
          if (selected[i]) sum += x[i];
        acc += sum;
        break;
      }
      case Op::kNoOp:
        break;
    }
  }
  return acc;
}

void validate_program(const Program& program) {
  if (program.empty()) throw MalformedProgram("empty program");
  if (!is_aggregator(program.back().op)) {
    throw MalformedProgram("program must end with an aggregator: " + program_string(program));
  }
  for (std::size_t i = 0; i + 1 < program.size(); ++i) {
    if (!is_comparison(program[i].op)) {
      throw MalformedProgram("only comparisons may precede the aggregator: " + program_string(program));
    }
  }
}

double execute_program(const Tensor& column, const Program& program) {
  validate_program(program);
  return execute_steps(column, program);
}

namespace {

std::size_t token_index(Op op) {
  switch (op) {
    case Op::kGreater: return 0;
    case Op::kLesser: return 1;
    case Op::kCount: return 2;
    case Op::kSum: return 3;
    default: return 4;
  }
}

double quantize(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TableQuestion make_question(Tensor column, Program program) {
  validate_program(program);
  if (program.size() > kEncodingSlots) throw MalformedProgram("program longer than the question encoding");
  TableQuestion q;
  q.encoding = Tensor(Shape(kEncodingDim));
  bool seen_greater = false, seen_lesser = false;
  for (std::size_t slot = 0; slot < kEncodingSlots; ++slot) {
    const std::size_t token = slot < program.size() ? token_index(program[slot].op) : 4;
    q.encoding[slot * kTokenVocab + token] = 1.0;
    if (slot >= program.size()) continue;
    if (program[slot].op == Op::kGreater) {
      if (seen_greater) throw MalformedProgram("at most one Greater per question");
      seen_greater = true;
      q.greater_pivot = program[slot].pivot;
    } else if (program[slot].op == Op::kLesser) {
      if (seen_lesser) throw MalformedProgram("at most one Lesser per question");
      seen_lesser = true;
      q.lesser_pivot = program[slot].pivot;
    }
  }
  q.encoding[kEncodingSlots * kTokenVocab] = q.greater_pivot;
  q.encoding[kEncodingSlots * kTokenVocab + 1] = q.lesser_pivot;
  q.answer = execute_program(column, program);
  q.column = std::move(column);
  q.program = std::move(program);
  return q;
}

std::vector<TableQuestion> generate_table_task(Rng& rng, const TableTaskConfig& config) {
  if (config.column_len < 2) throw std::invalid_argument("generate_table_task: column length must be at least 2");
  if (config.min_depth < 1 || config.max_depth > 3 || config.min_depth > config.max_depth) {
    throw std::invalid_argument("generate_table_task: grammar depth must lie in [1, 3]");
  }
  const double r = config.value_range;
  std::vector<TableQuestion> out;
  out.reserve(config.n_examples);
  for (std::size_t n = 0; n < config.n_examples; ++n) {
    Tensor column(Shape(config.column_len));
    for (double& v : column.data()) v = rng.uniform(-r, r);

    const std::size_t depth = config.min_depth + rng.uniform_index(config.max_depth - config.min_depth + 1);
    Program program;
    if (depth == 2) {
      program.push_back({rng.bernoulli(0.5) ? Op::kGreater : Op::kLesser, quantize(rng.uniform(-r, r))});
    } else if (depth == 3) {
      const double a = quantize(rng.uniform(-r, r));
      const double b = quantize(rng.uniform(-r, r));
      if (rng.bernoulli(0.5)) {
        program.push_back({Op::kGreater, a});
        program.push_back({Op::kLesser, b});
      } else {
        program.push_back({Op::kLesser, b});
        program.push_back({Op::kGreater, a});
      }
    }
    program.push_back({rng.bernoulli(0.5) ? Op::kCount : Op::kSum, 0.0});
    out.push_back(make_question(std::move(column), std::move(program)));
  }
  return out;
}

void write_table_jsonl(std::ostream& out, std::span<const TableQuestion> questions) {
  for (const auto& q : questions) {
    nlohmann::json rec;
    rec["column"] = std::vector<double>(q.column.data().begin(), q.column.data().end());
    auto& prog = rec["program"] = nlohmann::json::array();
    for (const auto& ins : q.program) {
      nlohmann::json step{{"op", op_name(ins.op)}};
      if (is_comparison(ins.op)) step["pivot"] = ins.pivot;
      prog.push_back(std::move(step));
    }
    rec["answer"] = q.answer;
    out << rec.dump() << '\n';
  }
}

std::vector<TableQuestion> read_table_jsonl(std::istream& in) {
  std::vector<TableQuestion> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto values = rec.at("column").get<std::vector<double>>();
      Tensor column(Shape(values.size()), values);
      Program program;
      for (const auto& step : rec.at("program")) {
        program.push_back({op_from_name(step.at("op").get<std::string>()), step.value("pivot", 0.0)});
      }
      auto q = make_question(std::move(column), std::move(program));
      if (q.answer != rec.at("answer").get<double>()) {
        throw ConsistencyError("stored answer disagrees with program execution");
      }
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

bool answer_matches(const TableQuestion& question, double prediction) {
  const double err = std::abs(prediction - question.answer);
  if (question.program.back().op == Op::kCount) return err < 1e-6;
  return err < 1e-6 || err < 1e-4 * std::abs(question.answer);
}

}  // namespace gradnoise::tasks
