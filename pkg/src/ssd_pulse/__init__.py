"""Remote photoplethysmography with structured state-space duality blocks, in numpy."""
from ssd_pulse.dsp import BvpSignal, MetricsReport, evaluate_clip, metrics_report
from ssd_pulse.model import PhysMambaConfig, PhysMambaWeights, forward, init_weights, load_checkpoint, save_checkpoint
from ssd_pulse.ssd import PathwayInputs, ssd_chunked, ssd_quadratic, ssm_recurrence_scan
from ssd_pulse.stem import VideoClip
from ssd_pulse.synth import SynthSpec, gen_bvp, gen_video

__version__ = "0.1.0"

__all__ = [
    "BvpSignal",
    "MetricsReport",
    "PathwayInputs",
    "PhysMambaConfig",
    "PhysMambaWeights",
    "SynthSpec",
    "VideoClip",
    "evaluate_clip",
    "forward",
    "gen_bvp",
    "gen_video",
    "init_weights",
    "load_checkpoint",
    "metrics_report",
    "save_checkpoint",
    "ssd_chunked",
    "ssd_quadratic",
    "ssm_recurrence_scan",
]
