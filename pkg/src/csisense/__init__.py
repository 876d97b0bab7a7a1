"""CSI sensing from low-resolution PMI/CQI feedback.

Library layout:

* :mod:`csisense.channel` - multipath channel and scenario generation, CSI
  dataset interchange;
* :mod:`csisense.codebook` - feedback codebooks, PMI selection, CQI
  quantization;
* :mod:`csisense.basis` - subspace bases from reference users, delay-domain
  transforms;
* :mod:`csisense.precoder` - Gaussian and hybrid training precoders;
* :mod:`csisense.feedback` - feedback simulation and solver instances;
* :mod:`csisense.solvers` - the constrained phase-retrieval solvers;
* :mod:`csisense.metrics` - correlation and rotation-invariant error;
* :mod:`csisense.harness` - Monte-Carlo experiment driver;
* :mod:`csisense.plotting` - result figures;
* :mod:`csisense.cli` - the ``sense`` command.
"""

from .channel import (ArrayGeometry, ChannelRealization, PathSet, Scenario,
                      ScenarioConfig, array_response, gen_flat_channel,
                      gen_multicarrier_channel, gen_scenario,
                      load_csi_dataset, save_csi_dataset)
from .codebook import (QuantizerSpec, Type1Codebook, build_type1_codebook,
                       build_type2_surrogate, default_quantizer, quantize_cqi,
                       select_pmi, select_pmi_group)
from .basis import (BasisMatrix, DelayBasis, build_basis, build_delay_basis,
                    delay_transform, reconstruct_csi)
from .precoder import (Precoder, gen_gaussian_precoder, gen_hybrid_precoder,
                       gen_subcarrier_precoders)
from .feedback import (CprInstance, FeedbackRecord, assemble_cpr_instance,
                       assemble_multicarrier_instance, simulate_mc_round,
                       simulate_round)
from .solvers import (MecsResult, SolverOptions, SolverReport,
                      count_violations, full_constraint_mask, mecs_construct,
                      mecs_sgda_solve, mm_unconstrained_solve, pd_evd_solve,
                      power_method, sgda_dual_gradient, sgda_gradient,
                      sgda_lagrangian, sgda_solve, solve_multicarrier)
from .metrics import EvalResult, correlation, evaluate, nmse_r

__version__ = "0.1.0"
