#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "symforce/forcing.hpp"
#include "symforce/laws.hpp"
#include "symforce/pincus.hpp"
#include "symforce/report.hpp"
#include "symforce/system_file.hpp"

using namespace symforce;
namespace fs = std::filesystem;

namespace {

struct options {
  std::string system_file, query_file, name, out;
  std::size_t cases = 1000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::uint32_t depth = 2, width = 2, cohen = 1, coll = 1, rank = 2;
  std::size_t generic = 0;
};

void emit(const json& j, const std::string& out) {
  std::cout << j.dump(2) << "\n";
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw input_error("cannot write " + out);
    f << j.dump(2) << "\n";
  }
}

void write_file(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw input_error("cannot write " + p.string());
  f << j.dump(2) << "\n";
}

void log_times(const run_report& r) {
  for (const auto& c : r.checks) std::cerr << c.name << ": " << c.seconds << " s\n";
}

int cmd_validate(const options& o) {
  auto L = load_system(read_json_file(o.system_file));
  run_report r;
  r.config = L.config;
  r.checks.push_back(timed("validate", "group closure, inverses, order automorphisms, normality", [&](check_record& c) {
    for (const auto& i : validate_system(*L.S)) c.failures.push_back({{"check", i.check}, {"detail", i.detail}});
    c.cases = L.S->group.size();
  }));
  for (std::size_t j = 1; j < L.it->depth(); ++j)
    r.checks.push_back(timed("limit clauses " + std::to_string(j), "order, action and membership by restrictions",
                             [&](check_record& c) {
                               for (const auto& i : limit_clause_check(*L.it, j))
                                 c.failures.push_back({{"clause", i.clause}, {"detail", i.detail}});
                               c.cases = L.it->level(j)->P->size();
                             }));
  log_times(r);
  emit(r.to_json(), o.out);
  return r.passed() ? 0 : 1;
}

int cmd_laws(const options& o) {
  auto L = load_system(read_json_file(o.system_file));
  law_options lo;
  lo.cases = o.cases;
  lo.seed = o.seed;
  lo.jobs = o.jobs;
  run_report r;
  r.config = L.config;
  r.config["cases"] = o.cases;
  r.config["seed"] = o.seed;
  auto rs = law_suite(*L.it, lo);
  r.add_laws(rs);
  json j = r.to_json();
  j["laws"] = json::array();
  for (const auto& x : rs) j["laws"].push_back(x.to_json());
  emit(j, o.out);
  return r.passed() ? 0 : 1;
}

// query: {"condition": literal, "formula": formula} or an array of those
int cmd_force(const options& o) {
  auto L = load_system(read_json_file(o.system_file));
  json q = read_json_file(o.query_file);
  const poset& P = *L.S->P;
  forcing_engine E(L.S->P);
  auto one = [&](const json& x) {
    if (!x.is_object() || !x.contains("formula")) throw input_error("query needs a formula");
    cond_id p = x.contains("condition") ? P.parse_literal(x["condition"]) : P.top();
    formula_id f = formula_from_json(P, x["formula"], L.lookup());
    return json{{"condition", P.literal(p)}, {"forces", E.forces(p, f)}};
  };
  json out;
  if (q.is_array()) {
    out = json::array();
    for (const auto& x : q) out.push_back(one(x));
  } else {
    out = one(q);
  }
  emit(out, o.out);
  return 0;
}

int cmd_eval(const options& o) {
  auto L = load_system(read_json_file(o.system_file));
  const poset& P = *L.S->P;
  if (o.generic >= P.atoms().size())
    throw input_error("generic " + std::to_string(o.generic) + " out of range (" + std::to_string(P.atoms().size()) +
                      " minimal classes)");
  name_id n;
  if (!o.name.empty() && (o.name[0] == '{' || o.name[0] == '[')) {
    json j;
    try {
      j = json::parse(o.name);
    } catch (const json::parse_error& e) {
      throw input_error(std::string("malformed name literal: ") + e.what());
    }
    n = name_from_json(P, j, L.lookup());
  } else {
    auto lk = L.lookup();
    if (!lk) throw input_error("no registry for this system; pass a name literal");
    n = lk(o.name);
  }
  hf::value v = evaluate(n, up_closure_of_atom(L.S->P, o.generic));
  emit({{"generic", o.generic}, {"name", o.name}, {"value", hf::to_json(v)}, {"text", hf::to_string(v)}}, o.out);
  return 0;
}

int cmd_pincus(const options& o) {
  if (o.out.empty()) throw input_error("pincus needs --out DIR");
  truncation_config cfg;
  cfg.iteration_depth = o.depth;
  cfg.product_width = o.width;
  cfg.cohen_domain = o.cohen;
  cfg.coll_target_bound = o.coll;
  cfg.name_rank_bound = o.rank;
  cfg.validate();
  tower t = build_tower(cfg);
  const auto& S = t.top();
  const poset& P = *S.P;
  fs::create_directories(fs::path(o.out) / "reports");

  json sys = {{"config", cfg.to_json()}, {"levels", json::array()}};
  for (std::size_t j = 0; j < t.depth(); ++j) {
    const auto& L = *t.it->level(j);
    json lv = {{"level", j},
               {"conditions", L.P->size()},
               {"minimal_classes", L.P->atoms().size()},
               {"group", L.group.size()},
               {"generators", L.filters.size()}};
    if (j > 0) {
      const auto& st = t.it->stage(j);
      lv["iterand"] = st.spec.label;
      lv["catalog"] = {{"conditions", st.conds.size()}, {"automorphisms", st.perms.size()}, {"generators", st.gens.size()}};
    }
    sys["levels"].push_back(lv);
  }
  write_file(fs::path(o.out) / "system.json", sys);

  json reg = json::object();
  for (const auto& [id, n] : t.registry) {
    if (id == "Gdot" || id == "Gamma")
      reg[id] = {{"entries", entries(n).size()}, {"rank", rank(n)}};
    else
      reg[id] = name_to_json(P, n);
  }
  write_file(fs::path(o.out) / "registry.json", reg);

  bool ok = true;
  auto save = [&](const std::string& file, const run_report& r) {
    log_times(r);
    ok = ok && r.passed();
    write_file(fs::path(o.out) / "reports" / file, r.to_json());
  };
  const json cj = cfg.to_json();

  {
    run_report r;
    r.config = cj;
    law_options lo;
    lo.cases = o.cases;
    lo.seed = o.seed;
    lo.jobs = o.jobs;
    auto t0 = std::chrono::steady_clock::now();
    r.add_laws(law_suite(*t.it, lo));
    std::cerr << "law suite: " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    ok = ok && r.passed();
    write_file(fs::path(o.out) / "reports" / "laws.json", r.to_json());
  }
  {
    run_report r;
    r.config = cj;
    r.checks.push_back(timed("registry coherence", "A_d = {g_(a,n) : a < d} under every generic", [&](check_record& c) {
      hs_checker hs(S);
      for (const auto& [id, n] : t.registry)
        if (!hs(n)) c.failures.push_back({{"name", id}, {"detail", "not hereditarily symmetric"}});
      for (std::size_t k = 0; k < P.atoms().size(); ++k) {
        evaluator ev(up_closure_of_atom(S.P, k));
        for (std::uint32_t d = 1; d <= cfg.iteration_depth; ++d) {
          std::vector<hf::value> vs;
          for (std::uint32_t a = 0; a < d; ++a)
            for (name_id g : t.g[a]) vs.push_back(ev(g));
          ++c.cases;
          if (ev(t.A[d]) != hf::make_set(vs)) c.failures.push_back({{"generic", k}, {"A", d}});
        }
      }
    }));
    save("registry_coherence.json", r);
  }
  {
    run_report r;
    r.config = cj;
    const std::size_t alpha = t.depth() - 1;
    std::vector<coord> e;
    for (std::uint32_t b = 0; b < alpha; ++b)
      for (std::uint32_t c = 0; c < cfg.product_width; ++c) e.push_back({b, c});
    r.checks.push_back(timed("notac witness", "pi in fix(e); forced pi(g_(a,0)) != g_(a,0); pi(q') || q'",
                             [&](check_record& c) {
                               c.cases = 1;
                               auto w = notac_witness(t, e, alpha, P.top());
                               json d = w.to_json();
                               d["alpha"] = alpha;
                               if (!w.fact1) c.failures.push_back({{"fact", 1}, {"witness", d}});
                               if (!w.fact2) c.failures.push_back({{"fact", 2}, {"witness", d}});
                               if (!w.fact3) c.failures.push_back({{"fact", 3}, {"witness", d}});
                               if (!w.evaluation_agrees) c.failures.push_back({{"fact", "2 by evaluation"}, {"witness", d}});
                             }));
    save("notac.json", r);
  }
  {
    // over the stage-0 level, where copies can always be renamed freshly
    run_report r;
    r.config = cj;
    const auto& B = *t.it->level(0);
    r.checks.push_back(timed("minimal supports", "{a} x a minimal support below q, unique", [&](check_record& c) {
      for (std::uint32_t n = 0; n < cfg.product_width; ++n) {
        ++c.cases;
        support_search_options so;
        so.rank = cfg.name_rank_bound;
        so.extra = t.g_local[0];
        auto w = minimal_support_search(B, 1, t.g_local[0][n], B.P->top(), so);
        so.reversed = true;
        auto v = minimal_support_search(B, 1, t.g_local[0][n], B.P->top(), so);
        json d = {{"name", "g_0_" + std::to_string(n)}, {"q", B.P->literal(w.q)}, {"alpha", w.alpha}, {"a", w.a},
                  {"reversed_alpha", v.alpha}, {"reversed_a", v.a}};
        if (w.alpha != 0 || w.a != std::vector<std::uint32_t>{n} || v.alpha != w.alpha || v.a != w.a)
          c.failures.push_back(d);
      }
    }));
    save("minimal_supports.json", r);
  }
  std::cout << json{{"out", o.out}, {"status", ok ? "pass" : "fail"}}.dump(2) << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symforce: symmetric systems, iterations and forcing at finite scale"};
  app.require_subcommand(1);
  options o;

  auto* v = app.add_subcommand("validate", "validate a system file");
  v->add_option("system", o.system_file, "system JSON")->required();
  v->add_option("--out", o.out, "also write the report here");

  auto* l = app.add_subcommand("laws", "run the iteration law suite");
  l->add_option("system", o.system_file, "system JSON")->required();
  l->add_option("--cases", o.cases, "samples per item when not exhaustive; 0 skips");
  l->add_option("--seed", o.seed, "random seed");
  l->add_option("--jobs", o.jobs, "worker threads");
  l->add_option("--out", o.out, "also write the report here");

  auto* f = app.add_subcommand("force", "decide p forces phi");
  f->add_option("system", o.system_file, "system JSON")->required();
  f->add_option("query", o.query_file, "query JSON")->required();
  f->add_option("--out", o.out, "also write the result here");

  auto* e = app.add_subcommand("eval", "evaluate a name under a generic filter");
  e->add_option("system", o.system_file, "system JSON")->required();
  e->add_option("--generic", o.generic, "index of the minimal class generating the filter")->required();
  e->add_option("--name", o.name, "registry id or name literal")->required();
  e->add_option("--out", o.out, "also write the result here");

  auto* p = app.add_subcommand("pincus", "build the truncated tower and write its reports");
  p->add_option("--depth", o.depth, "stages");
  p->add_option("--width", o.width, "copies per stage");
  p->add_option("--cohen", o.cohen, "Cohen domain size");
  p->add_option("--coll", o.coll, "collapse domain bound");
  p->add_option("--rank", o.rank, "name rank bound for searches");
  p->add_option("--cases", o.cases, "law suite samples");
  p->add_option("--seed", o.seed, "random seed");
  p->add_option("--jobs", o.jobs, "worker threads");
  p->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*v) return cmd_validate(o);
    if (*l) return cmd_laws(o);
    if (*f) return cmd_force(o);
    if (*e) return cmd_eval(o);
    if (*p) return cmd_pincus(o);
  } catch (const budget_error& err) {
    std::cerr << "budget: " << err.what() << "\n";
    return 3;
  } catch (const input_error& err) {
    std::cerr << "input: " << err.what() << "\n";
    return 2;
  } catch (const precondition_error& err) {
    std::cerr << "precondition: " << err.what() << "\n";
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "input: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
