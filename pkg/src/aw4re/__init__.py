"""AW4RE: a sensor-native surrogate environment for counterfactual camera queries.

Given a history of partial camera observations and a queried (possibly never
executed) camera action, the engine retrieves the most relevant evidence
frames, lifts them into a local 3D proxy, decodes an evidence-backed partial
observation with an explicit support mask, completes the unsupported
regions, and scores the result -- all wrapped in a finite-horizon sensing
loop with a synthetic ground-truth world as oracle.
"""

__version__ = "0.1.0"

from .completion import (
    CompletedObservation,
    PluginDescriptor,
    complete_baseline,
    complete_external,
)
from .corpus import EvidenceCorpus, EvidenceRecord
from .corpus import load as load_corpus
from .corpus import save as save_corpus
from .decoder import DecoderConfig, PartialObservation, decode, densify, splat
from .env import EnvConfig, Episode, RewardBreakdown, action_cost, info_gain, reset, step
from .geometry import (
    ActionSequence,
    CameraAction,
    CameraIntrinsics,
    Pose,
    frustum_overlap,
    project,
    unproject,
)
from .metrics import MetricsReport, evaluate_query, perceptual_proxy, psnr, ssim, temporal_consistency
from .proxy import PointCloud, build_proxy, static_mask_apply
from .retrieval import EvidenceSelection, RetrievalConfig, partition, relevance, select_evidence
from .scene import Frame, SceneConfig, SceneSpec, generate_scene, render_oracle, scene_state
