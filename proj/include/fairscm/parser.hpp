#pragma once

#include <string>

#include "fairscm/model.hpp"

namespace fairscm {

/**
 * Parse the model DSL into a validated ScmModel.
 *
 * One statement per line, `#` starts a comment:
 *
 *   model <name>
 *   background <id> ~ normal(<f>, <f>) | bernoulli(<f>) | categorical(<f>, ...)
 *   discrete <id> in {<label>=<int>, ...}     (labels optional)
 *   var <id> = <expression>
 *   protected <id> ; outcome <id> ; prediction <id>
 *
 * Expressions: numbers, identifiers, + - * /, == != < <= > >=, and, or,
 * not, unary -, parentheses, if <e> then <e> else <e>. Domain labels are
 * accepted wherever they are unambiguous and parse to their integer code.
 *
 * Throws ParseError (with line/column) on syntax errors and on any model
 * that fails validation: undeclared references, duplicates, cycles,
 * background variables with equations.
 */
ScmModel parse_model(const std::string& text);

/// Parse a standalone expression (used by tests and tools).
Expr::Ptr parse_expression(const std::string& text);

} // namespace fairscm
