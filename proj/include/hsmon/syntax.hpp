#pragma once

// Concrete ASCII syntax: parsing and printing of terms, formulas, programs.
//
//   formulas   &  |  ->  <->  !  \forall x .  \exists x .  [prog]phi  <prog>phi
//   terms      +  -  *  /  ^  min(a,b)  max(a,b)  f(args)   post-state: x_post
//   programs   ;  ++  {...}*  x:=e  x:=*  ?F  {x'=e, y'=e & Q}
//
// Whitespace-insensitive, `#` starts a line comment. Binary connectives and
// program operators associate to the right. print(parse(s)) is canonical and
// parse(print(x)) reproduces x structurally.

#include <string>
#include <string_view>

#include "hsmon/ast.hpp"

namespace hsmon {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

Term parse_term(std::string_view text);
Formula parse_formula(std::string_view text);
Program parse_program(std::string_view text);

std::string to_string(const Term& t);
std::string to_string(const Formula& f);
std::string to_string(const Program& p);

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

}  // namespace hsmon
