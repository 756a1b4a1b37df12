#include "imave/multiarm.hpp"

#include "detail/engine.hpp"
#include "imave/error.hpp"

namespace imave {

MultiArmModel multiarm_fit(const Dataset& ds, const ContrastSpec& spec, int d,
                           const EtaMode& eta, const FitConfig& cfg) {
  if (cfg.standardize)
    fail(ErrorCode::InvalidArgument,
         "standardization is provided on the binary entry point only");

  detail::EngineInput in = detail::build_engine_input(ds, spec, d, eta, cfg);
  detail::EngineOutput out = detail::run_engine(in);

  MultiArmModel model;
  model.spec = spec;
  model.B.B = out.B;
  model.g_values = out.g_values;
  model.loss_trace = out.loss_trace;
  model.h_trace = out.h_trace;
  model.iterations = out.iterations;
  model.converged = out.converged;
  model.d = d;
  return model;
}

}  // namespace imave
