"""Palm distributions, Papangelou intensities and their identities for spatial point processes."""
from .core import GeometryError, PointPattern, Window, erode, restrict
from .models import (CovarianceModel, FeatureDppKernel, GaussianDppKernel, LgcpModel, LinearField,
                     MaternClusterKernel, ModelError, PoissonModel, SncpModel, StraussModel, ThomasKernel,
                     UnsupportedClosedForm, intensity, joint_intensity, pcf)
from .palm import PalmModel, dpp_palm_kernel, dpp_tilde_kernel, palm_intensity, palm_model, papangelou
from .rng import RngStream, replicate_map
from .simulate import simulate
from .summaries import SummaryCurve, estimate_G, estimate_K, estimate_K_inhom
from .inference import PalmFitProblem, fit_palm, palm_loglik, palm_score
from .verify import IdentityReport, run_suite

__version__ = "0.1.0"
