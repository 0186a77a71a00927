"""Joint-measurement classical shadows for mixed states at desk scale.

Layers:

* :mod:`schur_shadows.qudit`: dense n-qudit states, permutation and local
  unitary actions, partial traces, Haar sampling, seeded streams.
* :mod:`schur_shadows.young`: partitions, row/column groups, Young
  symmetrizers, weights, majorization.
* :mod:`schur_shadows.basis`: nice Schur basis construction, verification,
  persistence, projective measurement, block change of basis.
* :mod:`schur_shadows.protocol`: population sampling, pre-processing, the
  row-symmetric POVM, shadow estimates, median-of-means, baseline.
* :mod:`schur_shadows.moments`: exact first/second shadow moments and the
  closed-form single-row variance; Monte Carlo cross-checks.
* :mod:`schur_shadows.observables` / :mod:`schur_shadows.cli`: observable
  families and the command-line driver.
"""

from .basis import (
    SchurBasis,
    build_basis,
    build_or_load,
    change_of_basis,
    load_basis,
    save_basis,
    schur_projective_measure,
    verify_nice_basis,
)
from .moments import (
    single_row_variance_closed_form,
    expected_shadow_exact,
    expected_shadow_formula,
    povm_completeness_residual,
    second_moment_exact,
    variance_exact,
)
from .protocol import (
    MixedState,
    Observable,
    ShadowEstimate,
    baseline_single_copy_shadow,
    generic_preprocess,
    median_of_means,
    mixed_state_shadow,
    population_shadow,
    predict,
    row_symmetric_sample,
    sample_population_input,
    shadow_matrix,
)
from .qudit import (
    OperatorGrid,
    Permutation,
    PureState,
    RngStream,
    apply_local_unitary,
    apply_permutation,
    encode_basis,
    haar_pure_state,
    haar_unitary,
    partial_trace_keep,
)
from .young import Partition, majorizes, partitions_of, weight_of, young_symmetrizer_apply

__version__ = "0.1.0"
