# File Name: __init__.py
# Created By: ZW
# Created On: 2023-03-02
# Purpose: submodule package init for sitground.core

# module imports
# ----------------------------------------------------------------------------
from .boxes import BoxParams, ImageDims, PixelBox, clip_box, from_params, to_params
from .gaussian import GaussianModel, condition, fit_gaussian, marginal
from .gmm import GmmModel, fit_gmm
from .linear import LinearModel, RefinerModel, fit_ridge
from .lognormal import LogNormalModel, fit_lognormal
from .records import AnnotationRecord, PriorProposal, SituationSpec, SyntheticScene
