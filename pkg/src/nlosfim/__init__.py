"""Fisher information of position and orientation from LOS and single-bounce NLOS mmWave paths."""

__version__ = "0.1.0"

from .bounds import BoundReport, Setup, SweepGrid, analyze, bounds, delta_peb, reference_setup, sweep
from .channel_fim import PathInfo, fim_channel_exact, path_infos, schur_efim
from .decomposition import EfimDecomposition, RankOneTerm, decompose, projected_gains
from .errors import DegenerateError, GeometryError, NlosFimError, ScenarioFileError
from .geometry import Anchor, Mobile, PathParams, Scenario, all_path_params, transformation_matrix
from .signal import SignalConfig, dft_beamformer

__all__ = [
    "Anchor", "BoundReport", "DegenerateError", "EfimDecomposition", "GeometryError", "Mobile",
    "NlosFimError", "PathInfo", "PathParams", "RankOneTerm", "Scenario", "ScenarioFileError",
    "Setup", "SignalConfig", "SweepGrid", "all_path_params", "analyze", "bounds", "decompose",
    "delta_peb", "dft_beamformer", "fim_channel_exact", "path_infos", "projected_gains",
    "reference_setup", "schur_efim", "sweep", "transformation_matrix",
]
