#pragma once

#include <stdexcept>
#include <string>

#include "ajm/model.hpp"

namespace ajm {

class FormulaError : public std::runtime_error {
 public:
  FormulaError(int line, int col, const std::string& msg);
  int line = 0;
  int col = 0;
};

// One declaration per line: "<predictor> ~ term + term + ...".
// Terms: 1 | lin(name) | s(name[,k=..][,degree=..][,r=..]) | ri(group)
//      | fri(group, time[,k=..][,degree=..][,r=..])
// s(time, ...) denotes a smooth of time; smooths are sum-to-zero constrained.
ModelSpec parse_formula(const std::string& text);

std::string render_formula(const ModelSpec& spec);

}  // namespace ajm
