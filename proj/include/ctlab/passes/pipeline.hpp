#pragma once

#include "ctlab/passes/codegen.hpp"
#include "ctlab/passes/dce.hpp"
#include "ctlab/passes/flatten.hpp"
#include "ctlab/passes/frame.hpp"
#include "ctlab/passes/immediates.hpp"
#include "ctlab/passes/reorder.hpp"

namespace ctlab {

struct PipelineStages {
  PassArtifact flat;
  PassArtifact imm;
  PassArtifact dce;
  PassArtifact frame;
  PassArtifact cg;
};

inline PipelineStages build_stages(const Program& p, const CodeLayout& layout = {}) {
  PipelineStages st;
  st.flat = flatten(p);
  st.imm = use_immediates(st.flat.flat_target());
  st.dce = dead_code_elim(st.imm.flat_target());
  st.frame = frame_alloc(st.dce.flat_target());
  st.cg = codegen(st.frame.flat_target(), layout);
  return st;
}

// flatten -> use_immediates -> dead_code_elim -> frame_alloc -> codegen,
// with gammas composed forward, oracle transforms composed right-to-left
// and predictor transforms composed left-to-right.
inline PassArtifact compose_pipeline(const Program& p,
                                     const CodeLayout& layout = {}) {
  auto st = std::make_shared<PipelineStages>(build_stages(p, layout));

  PassArtifact art;
  art.name = "pipeline";
  art.target = st->cg.machine_target();
  art.schema = {"sp"};
  art.gamma_machine = [st](const LeakTrace& k_src, const LowContext& ctx) {
    LowContext none;
    LeakTrace k1 = st->flat.gamma(k_src, none);
    LeakTrace k2 = st->imm.gamma(k1, none);
    LeakTrace k3 = st->dce.gamma(k2, none);
    LowContext frame_ctx;
    frame_ctx.low_oracle = (*st->cg.oracle_transform)(Oracle::unit());
    LeakTrace k4 = st->frame.gamma(k3, frame_ctx);
    return st->cg.gamma_machine(k4, ctx);
  };
  art.oracle_transform = [st](const Oracle& low) {
    Oracle a = (*st->cg.oracle_transform)(low);
    a = (*st->frame.oracle_transform)(a);
    a = (*st->dce.oracle_transform)(a);
    a = (*st->imm.oracle_transform)(a);
    return (*st->flat.oracle_transform)(a);
  };
  art.predictor_transform = [st](const Predictor& ph) {
    Predictor q = st->flat.predictor_transform(ph);
    q = st->imm.predictor_transform(q);
    q = st->dce.predictor_transform(q);
    q = st->frame.predictor_transform(q);
    return st->cg.predictor_transform(q);
  };
  return art;
}

}  // namespace ctlab
