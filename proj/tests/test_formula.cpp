#include <random>
#include <string>
#include <vector>

#include "ajm/formula.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ajm;

namespace {

FormulaError capture(const std::string& text) {
  try {
    parse_formula(text);
  } catch (const FormulaError& e) {
    return e;
  }
  FAIL("expected a formula error for: " << text);
  throw std::logic_error("unreachable");
}

bool mentions(const std::exception& e, const std::string& what) {
  return std::string(e.what()).find(what) != std::string::npos;
}

}  // namespace

TEST_CASE("declarations parse into term lists") {
  SUBCASE("an intercept only") {
    ModelSpec spec = parse_formula("alpha ~ 1\n");
    REQUIRE(spec.terms.size() == 1);
    CHECK(spec.terms[0].predictor == Predictor::alpha);
    CHECK(spec.terms[0].kind == TermKind::intercept);
    CHECK(spec.terms[0].constrained == false);
  }

  SUBCASE("the full five-predictor model") {
    ModelSpec spec = parse_formula(test_support::full_formula_text());
    CHECK(spec.terms_for(Predictor::lambda).size() == 2);
    CHECK(spec.terms_for(Predictor::gamma).size() == 1);
    CHECK(spec.terms_for(Predictor::alpha).size() == 1);
    CHECK(spec.terms_for(Predictor::mu).size() == 5);
    CHECK(spec.terms_for(Predictor::sigma).size() == 1);

    TermSpec fri = spec.terms_for(Predictor::mu)[4];
    CHECK(fri.kind == TermKind::functional_random_intercept);
    CHECK(fri.covariate == "id");
    CHECK(fri.n_knots == 12);
    CHECK(fri.constrained);

    TermSpec lam_smooth = spec.terms_for(Predictor::lambda)[1];
    CHECK(lam_smooth.kind == TermKind::smooth_time);
    CHECK(lam_smooth.n_knots == 10);
  }

  SUBCASE("smooths of time are distinguished from smooths of covariates") {
    ModelSpec spec = parse_formula("mu ~ s(time) + s(age)");
    CHECK(spec.terms[0].kind == TermKind::smooth_time);
    CHECK(spec.terms[1].kind == TermKind::smooth);
    CHECK(spec.terms[1].covariate == "age");
  }

  SUBCASE("defaults and option overrides") {
    ModelSpec spec = parse_formula("mu ~ s(x) + s(z, k=8, degree=2, r=1) + fri(id, time)");
    CHECK(spec.terms[0].n_knots == 10);
    CHECK(spec.terms[0].degree == 3);
    CHECK(spec.terms[0].diff_order == 2);
    CHECK(spec.terms[0].constrained);
    CHECK(spec.terms[1].n_knots == 8);
    CHECK(spec.terms[1].degree == 2);
    CHECK(spec.terms[1].diff_order == 1);
    CHECK(spec.terms[2].n_knots == 12);
  }

  SUBCASE("linear and grouped terms") {
    ModelSpec spec = parse_formula("gamma ~ lin(x1) + ri(id)");
    CHECK(spec.terms[0].kind == TermKind::linear);
    CHECK(spec.terms[0].covariate == "x1");
    CHECK(spec.terms[1].kind == TermKind::random_intercept);
    CHECK(spec.terms[1].covariate == "id");
  }

  SUBCASE("blank lines and comments are ignored") {
    ModelSpec spec = parse_formula(
        "# hazard level\n"
        "lambda ~ 1  # intercept only\n"
        "\n"
        "mu ~ lin(x.1)\n");
    REQUIRE(spec.terms.size() == 2);
    CHECK(spec.terms[1].covariate == "x.1");
  }
}

TEST_CASE("malformed declarations name the line and column") {
  SUBCASE("unknown predictor") {
    FormulaError e = capture("bob ~ 1");
    CHECK(e.line == 1);
    CHECK(e.col == 1);
    CHECK(mentions(e, "unknown predictor 'bob'"));
    CHECK(mentions(e, "formula:1:1"));
  }

  SUBCASE("missing tilde") {
    FormulaError e = capture("mu 1");
    CHECK(e.col == 4);
    CHECK(mentions(e, "expected '~'"));
  }

  SUBCASE("only one denotes an intercept") {
    FormulaError e = capture("mu ~ 2");
    CHECK(e.col == 6);
    CHECK(mentions(e, "only '1'"));
  }

  SUBCASE("unknown term function") {
    CHECK(mentions(capture("mu ~ spline(x)"), "unknown term function 'spline'"));
  }

  SUBCASE("unknown option") {
    FormulaError e = capture("mu ~ s(x, knots=5)");
    CHECK(e.col == 11);
    CHECK(mentions(e, "unknown option 'knots'"));
  }

  SUBCASE("missing close paren") {
    CHECK(mentions(capture("mu ~ s(x"), "expected"));
  }

  SUBCASE("functional random intercepts vary over time only") {
    FormulaError e = capture("mu ~ fri(id, age)");
    CHECK(e.col == 14);
    CHECK(mentions(e, "'time'"));
  }

  SUBCASE("trailing tokens after a term") {
    FormulaError e = capture("mu ~ 1 1");
    CHECK(e.col == 8);
    CHECK(mentions(e, "expected '+' or end of line"));
  }

  SUBCASE("stray characters") {
    FormulaError e = capture("mu ~ s(x)!");
    CHECK(e.col == 10);
    CHECK(mentions(e, "unexpected character '!'"));
  }

  SUBCASE("second declaration of a predictor") {
    FormulaError e = capture("mu ~ 1\nmu ~ lin(x)\n");
    CHECK(e.line == 2);
    CHECK(mentions(e, "declared twice"));
  }

  SUBCASE("no declarations at all") {
    CHECK(mentions(capture(""), "no predictor declarations"));
    CHECK(mentions(capture("# nothing but comments\n\n"), "no predictor declarations"));
  }
}

TEST_CASE("rendering and parsing invert each other") {
  SUBCASE("a canonical text is a fixed point") {
    std::string text =
        "lambda ~ 1 + s(time, k=10, degree=3, r=2)\n"
        "gamma ~ lin(x1)\n"
        "alpha ~ 1\n"
        "mu ~ 1 + s(x2, k=8, degree=3, r=2) + ri(id) + fri(id, time, k=12, degree=3, r=2)\n"
        "sigma ~ 1\n";
    CHECK(render_formula(parse_formula(text)) == text);
  }

  SUBCASE("random specs survive a render-parse cycle") {
    std::mt19937 gen(2026);
    auto pick = [&](int lo, int hi) {
      return std::uniform_int_distribution<int>(lo, hi)(gen);
    };
    const std::vector<std::string> names = {"x1", "x2", "age", "dose.mg", "w"};
    for (int rep = 0; rep < 50; ++rep) {
      ModelSpec spec;
      for (Predictor k : all_predictors) {
        if (pick(0, 3) == 0) continue;
        int n_terms = pick(1, 3);
        for (int t = 0; t < n_terms; ++t) {
          TermSpec term;
          term.predictor = k;
          switch (pick(0, 5)) {
            case 0: term.kind = TermKind::intercept; break;
            case 1:
              term.kind = TermKind::linear;
              term.covariate = names[pick(0, 4)];
              break;
            case 2:
              term.kind = TermKind::smooth;
              term.covariate = names[pick(0, 4)];
              break;
            case 3:
              term.kind = TermKind::smooth_time;
              term.covariate = "time";
              break;
            case 4:
              term.kind = TermKind::random_intercept;
              term.covariate = "id";
              break;
            default:
              term.kind = TermKind::functional_random_intercept;
              term.covariate = "id";
              break;
          }
          if (term.kind == TermKind::smooth || term.kind == TermKind::smooth_time ||
              term.kind == TermKind::functional_random_intercept) {
            term.n_knots = pick(5, 15);
            term.degree = pick(1, 3);
            term.diff_order = pick(1, 3);
            term.constrained = true;
          }
          spec.terms.push_back(term);
        }
      }
      if (spec.terms.empty()) continue;
      ModelSpec back = parse_formula(render_formula(spec));
      CHECK(back == spec);
    }
  }
}
