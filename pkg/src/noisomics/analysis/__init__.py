"""Statistics behind the evaluation reports."""
from .depth import DepthAnalysis, depth_analysis
from .embedding import Projection, median_bandwidth, mmd_matrix, mmd_rbf, pca_2d
from .metrics import (THRESHOLD_ACCURACY_DEFINITION, ResidualFit, classification_report,
                      correlation_matrix, fit_residual_gaussian, pearson_r, regression_metrics)
from .quality import psnr, reference_quality, ssim
from .report import AnalysisReport
from .shapley import AttributionReport, Surrogate, attribute, shapley_exact, surrogate_fit
from .stats import (EffectClass, EffectSize, RegressionFit, TTest, classify_f2, cohens_f2,
                    kde_1d, linear_fit, paired_ttest, silverman_bandwidth, slope_difference_test)
