"""Toolkit for separating topical from non-topical meme diffusion.

Pipeline: ingest a time-ordered tweet log, fit topic profiles to user and
meme noun bags, stream exposure/adoption events over the follower graph,
estimate adoption probabilities with internal/external decomposition, and
validate everything against simulated worlds with planted mechanisms.
"""

from ._common import ConfigError, DataError
from .exposure import (EventSet, ExposureEvent, brute_force_events,
                       extract_events)
from .graph import FollowerGraph
from .ingest import (MemeCatalog, SymbolTables, TweetLog, TweetRecord, Window,
                     build_catalog, build_noun_bags, parse_log)
from .sim import (PlantedMechanism, SimConfig, World, generate_world,
                  mechanism, planted_truth, simulate)
from .stats import (AdoptionCurve, AdoptionSurface, EmpiricalCdf, EventFilter,
                    bca_ci, decompose, estimate_curve_kappa, estimate_curve_s,
                    estimate_surface, event_cdfs, ks_distance, mann_whitney_u,
                    persistence, seed_relative_alignment, topical_user_lift)
from .topics import (LdaModel, ProfileSet, TopicalProfile, alignment,
                     classify_topicality, entropy_nats, fit_lda, profile,
                     profile_for, profiles_from_model)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError",
    "TweetRecord", "TweetLog", "Window", "SymbolTables", "MemeCatalog",
    "parse_log", "build_catalog", "build_noun_bags",
    "FollowerGraph",
    "LdaModel", "TopicalProfile", "ProfileSet", "fit_lda", "profile",
    "profile_for", "profiles_from_model", "classify_topicality",
    "entropy_nats", "alignment",
    "ExposureEvent", "EventSet", "extract_events", "brute_force_events",
    "EventFilter", "AdoptionCurve", "AdoptionSurface", "EmpiricalCdf",
    "estimate_curve_kappa", "estimate_curve_s", "estimate_surface",
    "decompose", "persistence", "event_cdfs", "ks_distance",
    "mann_whitney_u", "bca_ci", "seed_relative_alignment",
    "topical_user_lift",
    "SimConfig", "PlantedMechanism", "World", "generate_world", "mechanism",
    "simulate", "planted_truth",
]
