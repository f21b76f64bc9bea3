"""Phasor-field NLOS imaging of hidden scenes submerged in scattering media."""

from .core import (
    SPEED_OF_LIGHT,
    DomainError,
    ImpulseResponse,
    MediumParams,
    NlosError,
    PhasorPulse,
    ReconstructionVolume,
    RelayWall,
    hg_phase,
    rsd_kernel,
    sample_free_path,
    sample_hg,
    transmittance,
)
from .scenes import SceneDescription, preset_scene
from .simulate import RenderConfig, render_ballistic, render_impulse

__version__ = "0.1.0"
