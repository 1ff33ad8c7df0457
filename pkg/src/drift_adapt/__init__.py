"""Drift-adapt: domain adaptation for impact-kinematics regression.

Pipeline pieces: synthetic impact datasets with controllable drift
(:mod:`~drift_adapt.impact_data`), per-channel feature extraction
(:mod:`~drift_adapt.featurize`), scatter-based subspace alignment
(:mod:`~drift_adapt.drca`), adversarial feature translation and sample
reweighting (:mod:`~drift_adapt.adversarial`), a dense-network regressor
(:mod:`~drift_adapt.mlhm`), and an evaluation/reporting harness
(:mod:`~drift_adapt.evaluation`), wired together by
:mod:`~drift_adapt.pipeline` and the ``drift-adapt`` CLI.
"""

__version__ = "0.1.0"
