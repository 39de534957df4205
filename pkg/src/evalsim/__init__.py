"""Simulation, fitting and embedding of evaluation-based voting profiles."""
from ._kernels import BACKEND
from .copula import (CheckerboardCopula, CorrelationMatrix, checkerboard_draw, cholesky,
                     fit_checkerboard, gaussian_copula_draw, latent_from_spearman,
                     pseudo_observations, spearman_from_latent)
from .core import (Profile, RandomSource, Scale, discretize, profile_to_csv, read_profile_csv,
                   validate_profile, write_profile_csv)
from .embedding import (EmbeddingProblem, EmbeddingSolution, evals_to_dissimilarities,
                        generate_from_embedding, refit_voter_distribution, smacof)
from .errors import *  # noqa: F401,F403
from .fitting import (FitReport, bartlett_sphericity, chi2_statistic, fit_beta_moments,
                      fit_betabinomial_moments, fit_binomial, fit_pipeline, fit_truncnormal_mle,
                      kruskal_wallis, ks_statistic)
from .generators import (CopulaModel, DirichletModel, GaussianMixture, IDDModel, IIDModel,
                         LinearTruncated, MultinomialModel, Sigmoid, SpatialModel, UniformBox,
                         generate, model_from_json, spatial_generate)
from .rules import (ElectionResult, approval_winner, majority_judgment_winner,
                    ranking_distribution, rankings, range_winner)
from .univariate import (Beta, BetaBinomial, Binomial, DiscreteUniform, Empirical, TruncNormal,
                         Uniform01, marginal_from_json)

__version__ = "0.1.0"
