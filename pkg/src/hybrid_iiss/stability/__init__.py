"""Stability estimates as executable checks, and constructions between them."""
from .certificates import (ALPHA_TEXT, SIGMA_TEXT, LocalCertificate, PracticalCertificate,
                           bad_example_local_cert, bad_example_practical_cert)
from .checks import (GradientError, GridSpec, NonzeroInputError, check_0ugas, check_iiss,
                     check_local_iiss, check_pointwise_dissipation, check_practical_iiss,
                     check_traj_dissipation, check_ubebs, check_ubebs_alpha123)
from .constructions import (ConstructedBeta, OrderingError, V2Estimate, construct_0ugas_beta,
                            derive_ubebs_from_a, empirical_V2)
from .energy import completed_energy_profile, energy, energy_profile
from .fields import ScalarField
from .report import DEFAULT_CHECK_TOL, CheckReport, merge_reports
from .spec import KINDS, EstimateSpec, SpecError

__all__ = [
    "ALPHA_TEXT", "SIGMA_TEXT", "LocalCertificate", "PracticalCertificate",
    "bad_example_local_cert", "bad_example_practical_cert", "GradientError", "GridSpec",
    "NonzeroInputError", "check_0ugas", "check_iiss", "check_local_iiss",
    "check_pointwise_dissipation", "check_practical_iiss", "check_traj_dissipation",
    "check_ubebs", "check_ubebs_alpha123", "ConstructedBeta", "OrderingError", "V2Estimate",
    "construct_0ugas_beta", "derive_ubebs_from_a", "empirical_V2", "completed_energy_profile",
    "energy", "energy_profile", "ScalarField", "DEFAULT_CHECK_TOL", "CheckReport",
    "merge_reports", "KINDS", "EstimateSpec", "SpecError",
]
