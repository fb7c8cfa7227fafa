// Batch front end: run and enumerate programs, render constant-time
// verdicts, compile through the pass pipeline and drive the differential
// pass checks.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ctlab/ctcheck.hpp"
#include "ctlab/format.hpp"
#include "ctlab/parser.hpp"
#include "ctlab/passcheck.hpp"
#include "ctlab/passes.hpp"
#include "ctlab/smallstep.hpp"
#include "ctlab/validate.hpp"
#include "json.hpp"

using namespace ctlab;
using nlohmann::json;

namespace {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunSpec {
  Program program;
  std::string entry;
  unsigned word_bits = 32;
  uint64_t fuel = 1'000'000;
  std::vector<Word> args;
  MemState mem;
  Oracle oracle = Oracle::unit();
  InputPolicy inputs;
  ContentPolicy contents = ContentPolicy::domain_bytes({0x00, 0xAA});
  ChoiceUniverse universe = ChoiceUniverse::defaults();
  std::vector<Oracle> oracles;          // for check-ct / contexts
  std::vector<std::string> key_selectors;
  SecretSpace secrets;
  CodeLayout layout;
  json raw;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MemState mem_from_json(const json& j, unsigned bits) {
  MemState m;
  for (const auto& cell : j) {
    uint32_t addr = cell.at("addr").get<uint32_t>();
    if (cell.contains("word"))
      m.put_word(addr, Word::of(cell["word"].get<uint64_t>(), bits));
    else
      m.put_byte(addr, uint8_t(cell.at("byte").get<uint32_t>()));
  }
  return m;
}

InputPolicy inputs_from_json(const json& j, unsigned bits) {
  auto words = [bits](const json& a) {
    std::vector<Word> ws;
    for (const auto& v : a) ws.push_back(Word::of(v.get<uint64_t>(), bits));
    return ws;
  };
  if (j.contains("script")) return InputPolicy::scripted(words(j["script"]));
  if (j.contains("domain")) return InputPolicy::domain(words(j["domain"]));
  if (j.contains("domains")) {
    std::vector<std::vector<Word>> per_call;
    for (const auto& a : j["domains"]) per_call.push_back(words(a));
    return InputPolicy::domains(std::move(per_call));
  }
  throw SpecError("inputs must have script, domain, or domains");
}

ContentPolicy contents_from_json(const json& j) {
  if (j.contains("constant"))
    return ContentPolicy::constant_byte(uint8_t(j["constant"].get<uint32_t>()));
  if (j.contains("seeded")) return ContentPolicy::seeded(j["seeded"].get<uint64_t>());
  if (j.contains("domain")) {
    std::vector<uint8_t> dom;
    for (const auto& v : j["domain"]) dom.push_back(uint8_t(v.get<uint32_t>()));
    return ContentPolicy::domain_bytes(dom);
  }
  throw SpecError("contents must have constant, seeded or domain");
}

RunSpec load_spec(const std::string& path, unsigned width_override,
                  uint64_t fuel_override, std::optional<uint64_t> seed) {
  json j = json::parse(read_file(path));
  RunSpec spec;
  spec.raw = j;
  spec.word_bits = width_override ? width_override
                                  : j.value("word_width", 32u);
  std::string src_path = j.at("program").get<std::string>();
  spec.program = parse(read_file(src_path), ParseOptions{spec.word_bits});
  auto diags = validate(spec.program);
  if (!diags.empty()) {
    std::string msg = "program does not validate:";
    for (const auto& d : diags) msg += "\n  " + d.message();
    throw SpecError(msg);
  }
  spec.entry = j.value("entry", spec.program.entry);
  spec.program.entry = spec.entry;
  spec.fuel = fuel_override ? fuel_override : j.value("fuel", uint64_t(1'000'000));
  if (j.contains("args"))
    for (const auto& a : j["args"])
      spec.args.push_back(Word::of(a.get<uint64_t>(), spec.word_bits));
  if (j.contains("memory")) spec.mem = mem_from_json(j["memory"], spec.word_bits);
  if (seed)
    spec.oracle = Oracle::seeded(*seed, spec.word_bits);
  else if (j.contains("oracle"))
    spec.oracle = oracle_from_json(j["oracle"], spec.word_bits);
  if (j.contains("inputs"))
    spec.inputs = inputs_from_json(j["inputs"], spec.word_bits);
  if (j.contains("contents")) spec.contents = contents_from_json(j["contents"]);
  if (j.contains("universe")) {
    spec.universe.bases.clear();
    spec.universe.randoms.clear();
    for (const auto& b : j["universe"].value("bases", json::array()))
      spec.universe.bases.push_back(Word::of(b.get<uint64_t>(), spec.word_bits));
    for (const auto& r : j["universe"].value("randoms", json::array()))
      spec.universe.randoms.push_back(Word::of(r.get<uint64_t>(), spec.word_bits));
    if (spec.universe.bases.empty())
      spec.universe.bases = ChoiceUniverse::defaults(spec.word_bits).bases;
    if (spec.universe.randoms.empty())
      spec.universe.randoms = ChoiceUniverse::defaults(spec.word_bits).randoms;
  }
  if (j.contains("oracles"))
    for (const auto& o : j["oracles"])
      spec.oracles.push_back(oracle_from_json(o, spec.word_bits));
  if (j.contains("publics"))
    for (const auto& s : j["publics"].value("key", json::array()))
      spec.key_selectors.push_back(s.get<std::string>());
  if (j.contains("secrets")) {
    for (const auto& c : j["secrets"]) {
      CtCase cc;
      cc.label = c.value("label", "case" + std::to_string(spec.secrets.cases.size()));
      if (c.contains("args"))
        for (const auto& a : c["args"])
          cc.args.push_back(Word::of(a.get<uint64_t>(), spec.word_bits));
      else
        cc.args = spec.args;
      cc.mem = c.contains("memory") ? mem_from_json(c["memory"], spec.word_bits)
                                    : spec.mem;
      cc.inputs = c.contains("inputs") ? inputs_from_json(c["inputs"], spec.word_bits)
                                       : spec.inputs;
      spec.secrets.cases.push_back(std::move(cc));
    }
  }
  if (j.contains("layout")) {
    spec.layout.code_base = j["layout"].value("code_base", 0x1000u);
    spec.layout.sp0 = j["layout"].value("sp0", 0x4000u);
  }
  return spec;
}

ExecEnv env_of(const RunSpec& spec) {
  ExecEnv env;
  env.program = &spec.program;
  env.initial_mem = spec.mem;
  env.inputs = spec.inputs;
  env.contents = spec.contents;
  env.universe = spec.universe;
  env.fuel = spec.fuel;
  return env;
}

// Key selectors: arg:<i>, in:<i>, out:<i>, inlen, pweq:<table base>.
KeyFn key_fn(const std::vector<std::string>& selectors, unsigned bits) {
  return [selectors, bits](const CtCase& c, const Outcome& o) {
    std::string key;
    auto in_at = [&o](size_t n) -> std::optional<Word> {
      size_t i = 0;
      for (const auto& e : o.io)
        if (e.kind == IOKind::In && i++ == n) return e.value;
      return std::nullopt;
    };
    for (const auto& sel : selectors) {
      key += ";";
      if (sel.rfind("arg:", 0) == 0) {
        size_t i = std::stoul(sel.substr(4));
        key += i < c.args.size() ? c.args[i].str() : "?";
      } else if (sel.rfind("in:", 0) == 0) {
        auto w = in_at(std::stoul(sel.substr(3)));
        key += w ? w->str() : "?";
      } else if (sel.rfind("out:", 0) == 0) {
        size_t n = std::stoul(sel.substr(4));
        size_t i = 0;
        std::string got = "?";
        for (const auto& e : o.io)
          if (e.kind == IOKind::Out && i++ == n) got = e.value.str();
        key += got;
      } else if (sel == "inlen") {
        size_t n = 0;
        for (const auto& e : o.io)
          if (e.kind == IOKind::In) ++n;
        key += std::to_string(n);
      } else if (sel.rfind("pweq:", 0) == 0) {
        // declassified predicate: stored password for user in0 equals in1
        uint32_t base = uint32_t(std::stoul(sel.substr(5)));
        auto u = in_at(0);
        auto a = in_at(1);
        std::string got = "?";
        if (u && a) {
          auto pw = c.mem.load(base + 4 * u->value(), bits / 8, bits);
          if (pw) got = (*pw == *a) ? "1" : "0";
        }
        key += got;
      } else {
        key += "<bad:" + sel + ">";
      }
    }
    return key;
  };
}

void emit_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(out_path);
    out << text << "\n";
  }
}

int cmd_run(const RunSpec& spec, const std::string& out_path) {
  Outcome o = exec_oracle(env_of(spec), spec.entry, spec.args, spec.oracle);
  emit_output(o.to_json().dump(), out_path);
  return (o.status == RunStatus::Terminated || o.status == RunStatus::BenignStuck)
             ? 0
             : 1;
}

int cmd_enumerate(const RunSpec& spec, const std::string& out_path) {
  auto outs = exec_enumerate(env_of(spec), spec.entry, spec.args);
  json arr = json::array();
  for (const auto& o : outs) arr.push_back(o.to_json());
  emit_output(arr.dump(), out_path);
  return 0;
}

int cmd_check_ct(const RunSpec& spec, const std::string& notion,
                 const std::string& out_path) {
  if (spec.secrets.cases.empty())
    throw SpecError("check-ct needs a secrets list in the spec");
  ExecEnv env = env_of(spec);
  KeyFn key = key_fn(spec.key_selectors, spec.word_bits);
  CtVerdict v;
  if (notion == "naive") {
    v = check_naive_ct(env, spec.entry, key, spec.secrets);
  } else if (notion == "oracle") {
    if (spec.oracles.empty()) throw SpecError("oracle notion needs oracles");
    v = check_oracle_ct(env, spec.entry, key, spec.secrets, spec.oracles);
  } else if (notion == "predictor") {
    v = check_predictor_ct(env, spec.entry, key, spec.secrets);
  } else if (notion == "flawed") {
    v = check_flawed_ct(env, spec.entry, key, spec.secrets);
  } else if (notion == "output") {
    if (spec.oracles.empty()) throw SpecError("output notion needs oracles");
    v = check_output_independence(env, spec.entry, key, spec.secrets,
                                  spec.oracles);
  } else {
    throw SpecError("unknown notion " + notion);
  }
  emit_output(v.to_json().dump(), out_path);
  switch (v.kind) {
    case CtVerdict::Kind::ConstantTime: return 0;
    case CtVerdict::Kind::Leaky: return 1;
    case CtVerdict::Kind::Inconclusive: return 3;
  }
  return 3;
}

int cmd_compile(const RunSpec& spec, const std::string& stage,
                const std::string& emit, const std::string& out_dir) {
  auto write = [&](const std::string& name, const std::string& text) {
    if (out_dir.empty()) {
      std::cout << text;
      if (!text.empty() && text.back() != '\n') std::cout << "\n";
    } else {
      std::ofstream out(out_dir + "/" + name);
      out << text;
    }
  };
  if (stage == "reorder") {
    PassArtifact art = reorder_random(spec.program);
    write("reorder.ct", format(std::get<Program>(art.target)));
    return 0;
  }
  PipelineStages st = build_stages(spec.program, spec.layout);
  const FlatProgram* flat = nullptr;
  if (stage == "flatten") flat = &st.flat.flat_target();
  else if (stage == "use-immediates") flat = &st.imm.flat_target();
  else if (stage == "dce") flat = &st.dce.flat_target();
  else if (stage == "frame-alloc") flat = &st.frame.flat_target();
  else if (stage != "codegen" && stage != "full")
    throw SpecError("unknown stage " + stage);

  if (flat) {
    if (emit == "json")
      write("ir.json", flat_to_json(*flat).dump(2));
    else
      write("ir.txt", print(*flat));
    return 0;
  }
  const MachineProgram& mp = st.cg.machine_target();
  json manifest{{"sp0", mp.sp0},
                {"stack_bytes", mp.stack_bytes},
                {"entry", mp.entry},
                {"word_bits", mp.word_bits},
                {"functions", mp.fn_positions}};
  if (emit == "machine" || emit == "")
    write("machine.txt", machine_listing(mp));
  if (emit == "json" || emit == "")
    write("machine.json", machine_to_json(mp).dump(2));
  write("manifest.json", manifest.dump(2));
  return 0;
}

int cmd_check_pass(const RunSpec& spec, const std::string& pass,
                   const std::string& contract, bool expect_fail,
                   const std::string& out_path) {
  std::vector<Oracle> contexts = spec.oracles;
  if (contexts.empty())
    contexts = {Oracle::bump(Word::of(64, spec.word_bits), Word::of(16, spec.word_bits)),
                Oracle::seeded(7, spec.word_bits)};

  PassCheckConfig cfg;
  cfg.entry = spec.entry;
  cfg.args = spec.args;
  cfg.mem = spec.mem;
  cfg.inputs = spec.inputs;
  cfg.contents = spec.contents.kind == ContentPolicy::Kind::Domain
                     ? ContentPolicy::constant_byte(0xAA)
                     : spec.contents;
  cfg.universe = spec.universe;
  cfg.fuel = spec.fuel;
  cfg.contexts = contexts;

  PassArtifact art;
  PipelineStages st;
  if (pass == "reorder") {
    art = reorder_random(spec.program);
    cfg.source = spec.program;
  } else if (pass == "flatten") {
    art = flatten(spec.program);
    cfg.source = spec.program;
  } else {
    st = build_stages(spec.program, spec.layout);
    if (pass == "use-immediates") {
      art = st.imm;
      cfg.source = embed(st.flat.flat_target());
    } else if (pass == "dce") {
      art = st.dce;
      cfg.source = embed(st.imm.flat_target());
    } else if (pass == "frame-alloc") {
      art = st.frame;
      cfg.source = embed(st.dce.flat_target());
    } else if (pass == "codegen") {
      art = st.cg;
      cfg.source = embed(st.frame.flat_target());
    } else if (pass == "pipeline") {
      art = compose_pipeline(spec.program, spec.layout);
      cfg.source = spec.program;
    } else {
      throw SpecError("unknown pass " + pass);
    }
  }
  cfg.artifact = &art;

  json report;
  bool ok;
  if (pass == "reorder" && contract == "oracle") {
    // the demonstrated separation: no oracle-transformation function exists
    Word a1 = spec.args.size() > 0 ? spec.args[0] : Word::of(16, spec.word_bits);
    Word a2 = Word::of(a1.value() + 4, spec.word_bits);
    MemState mem = spec.mem;
    if (!mem.contains(a1.value(), 4)) mem.put_word(a1.value(), Word::of(0, spec.word_bits));
    if (!mem.contains(a2.value(), 4)) mem.put_word(a2.value(), Word::of(0, spec.word_bits));
    ReorderSeparation sep = reorder_counterexample(spec.program, art, a1, a2, mem);
    report = {{"contract", "oracle"},
              {"pass", "reorder"},
              {"counterexample_reproduced", sep.reproduced},
              {"source_prints", {sep.source_print_a1.value(), sep.source_print_a2.value()}},
              {"target_prints", {sep.target_print_a1.value(), sep.target_print_a2.value()}},
              {"analysis", sep.analysis}};
    ok = !sep.reproduced;  // contract "passes" only if no counterexample
  } else {
    PassCheckReport rep;
    if (contract == "leakage") rep = check_leakage_contract(cfg);
    else if (contract == "oracle") rep = check_oracle_contract(cfg);
    else if (contract == "predictor") rep = check_predictor_contract(cfg);
    else throw SpecError("unknown contract " + contract);
    report = {{"contract", contract},
              {"pass", pass},
              {"ok", rep.ok},
              {"cases", rep.cases},
              {"checked", rep.checked},
              {"skipped_benign", rep.skipped_benign}};
    if (!rep.ok) report["first_failure"] = rep.first_failure;
    ok = rep.ok;
  }
  emit_output(report.dump(), out_path);
  if (expect_fail) return ok ? 1 : 0;
  return ok ? 0 : 1;
}

int cmd_demo() {
  unsigned bits = 32;
  std::cout << "== the countdown pitfall ==\n";
  Program countdown = parse(read_file("corpus/countdown.ct"));
  ExecEnv env;
  env.program = &countdown;
  env.contents = ContentPolicy::constant_byte(0);
  SecretSpace secrets;
  for (uint32_t x : {1u, 2u}) {
    CtCase c;
    c.label = "x=" + std::to_string(x);
    c.args = {Word::of(x, bits)};
    secrets.cases.push_back(c);
  }
  KeyFn pub = [](const CtCase&, const Outcome&) { return std::string("all"); };
  CtVerdict flawed = check_flawed_ct(env, "countdown", pub, secrets);
  CtVerdict pred = check_predictor_ct(env, "countdown", pub, secrets);
  std::cout << "flawed notion (leaks as a function of nondets): "
            << (flawed.constant_time() ? "constant-time" : "leaky") << "\n";
  std::cout << "predictor notion: " << (pred.leaky() ? "leaky" : "constant-time")
            << "\n";
  std::cout << "  " << pred.note << "\n";
  std::cout << "the pair of verdicts shows why dropping event interleaving "
               "breaks causality\n\n";

  std::cout << "== reordering separates the two compiler contracts ==\n";
  Program demo = parse(read_file("corpus/reorder_demo.ct"));
  PassArtifact art = reorder_random(demo);
  MemState mem;
  mem.put_word(16, Word::of(0, bits));
  mem.put_word(20, Word::of(0, bits));
  ReorderSeparation sep = reorder_counterexample(
      demo, art, Word::of(16, bits), Word::of(20, bits), mem);
  std::cout << "source prints: " << sep.source_print_a1.str() << " / "
            << sep.source_print_a2.str() << " (w = 16 / 20)\n";
  std::cout << "target prints: " << sep.target_print_a1.str() << " / "
            << sep.target_print_a2.str() << "\n";
  std::cout << (sep.reproduced ? "counterexample reproduced: " : "NOT reproduced: ")
            << sep.analysis << "\n";

  PassCheckConfig cfg;
  cfg.source = demo;
  cfg.artifact = &art;
  cfg.entry = demo.entry;
  cfg.args = {Word::of(16, bits)};
  cfg.mem = mem;
  cfg.contents = ContentPolicy::constant_byte(0);
  PassCheckReport rep = check_predictor_contract(cfg);
  std::cout << "predictor contract on the same pass: "
            << (rep.ok ? "holds" : ("fails: " + rep.first_failure)) << "\n";
  return sep.reproduced && rep.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leakage-trace workbench"};
  app.require_subcommand(1);

  std::string spec_path, out_path, notion = "naive", pass = "pipeline",
              contract = "leakage", stage = "full", emit;
  unsigned word_width = 0;
  uint64_t fuel = 0;
  std::optional<uint64_t> seed;
  bool expect_fail = false, json_out = false;

  auto add_common = [&](CLI::App* cmd, bool needs_spec = true) {
    if (needs_spec) cmd->add_option("spec", spec_path, "run spec (JSON)")->required();
    cmd->add_option("--word-width", word_width, "override word width");
    cmd->add_option("--fuel", fuel, "override step budget");
    cmd->add_option("--seed", seed, "use a seeded oracle");
    cmd->add_option("-o,--output", out_path, "write output to a file (compile: a directory)");
    cmd->add_flag("--json", json_out, "JSON output (default)");
  };

  CLI::App* run = app.add_subcommand("run", "run a program under an oracle");
  add_common(run);
  CLI::App* enumerate = app.add_subcommand("enumerate", "enumerate all executions");
  add_common(enumerate);
  CLI::App* checkct = app.add_subcommand("check-ct", "constant-time verdicts");
  add_common(checkct);
  checkct->add_option("--notion", notion, "naive|oracle|predictor|flawed|output");
  CLI::App* compile = app.add_subcommand("compile", "compile through the pipeline");
  add_common(compile);
  compile->add_option("--stage", stage,
                      "flatten|use-immediates|dce|frame-alloc|codegen|full|reorder");
  compile->add_option("--emit", emit, "flat|machine|json");
  CLI::App* checkpass = app.add_subcommand("check-pass", "pass contract checks");
  add_common(checkpass);
  checkpass->add_option("--pass", pass,
                        "flatten|use-immediates|dce|frame-alloc|codegen|pipeline|reorder");
  checkpass->add_option("--contract", contract, "leakage|oracle|predictor");
  checkpass->add_flag("--expect-fail", expect_fail,
                      "exit 0 when the contract fails as demanded");
  CLI::App* demo = app.add_subcommand("demo", "run the built-in demonstrations");
  (void)demo;

  CLI11_PARSE(app, argc, argv);

  try {
    if (demo->parsed()) return cmd_demo();
    RunSpec spec = load_spec(spec_path, word_width, fuel, seed);
    if (run->parsed()) return cmd_run(spec, out_path);
    if (enumerate->parsed()) return cmd_enumerate(spec, out_path);
    if (checkct->parsed()) return cmd_check_ct(spec, notion, out_path);
    if (compile->parsed()) return cmd_compile(spec, stage, emit, out_path);
    if (checkpass->parsed())
      return cmd_check_pass(spec, pass, contract, expect_fail, out_path);
  } catch (SpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (CompileError& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return 1;
  } catch (PatternMismatch& e) {
    std::cerr << "pattern mismatch: " << e.what() << "\n";
    return 1;
  } catch (std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
