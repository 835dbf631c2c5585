"""Planar-biped walking controller: privileged training, online extrinsics
estimation, and policy finetuning against the imperfect estimator."""

__version__ = "0.1.0"
