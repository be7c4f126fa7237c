"""
Operator family registry
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, Iterable, Optional

import config
from src.core import Family, ModelSpec, Site
from .base import BaseFamily, DecayClass, extrapolate_to_zero
from .z1 import Z1Family
from .z2 import Z2Family
from .fractional import FractionalFamily
from .hierarchical import HierarchicalFamily
from .general import GeneralGraphFamily

logger = logging.getLogger(__name__)


class FamilyRegistry:
    """Maps models to their family and builds per-site tables concurrently"""

    def __init__(self):
        self.families: Dict[Family, BaseFamily] = {}
        self._initialize_families()

    def _initialize_families(self):
        for family_cls in (Z1Family, Z2Family, FractionalFamily, HierarchicalFamily,
                           GeneralGraphFamily):
            family = family_cls()
            self.families[family.family] = family
            logger.debug(f"Registered {family.name} family")

    def get(self, model: ModelSpec) -> BaseFamily:
        return self.families[model.family]

    def build_table(self, fn: Callable[[Site], float], sites: Iterable[Site],
                    max_workers: Optional[int] = None) -> Dict[Site, float]:
        """
        Evaluate fn on every site in parallel

        Args:
            fn: per-site evaluation; exceptions propagate to the caller
            sites: sites to fill
            max_workers: pool size (config.MC_WORKERS by default)

        Returns:
            Dict in the order of the given sites
        """
        order = list(sites)
        values: Dict[Site, float] = {}
        with ThreadPoolExecutor(max_workers=max_workers or config.MC_WORKERS) as executor:
            futures = {executor.submit(fn, site): site for site in order}
            for future in as_completed(futures):
                values[futures[future]] = future.result()
        return {site: values[site] for site in order}


_registry: Optional[FamilyRegistry] = None


def get_registry() -> FamilyRegistry:
    global _registry
    if _registry is None:
        _registry = FamilyRegistry()
    return _registry


def get_family(model: ModelSpec) -> BaseFamily:
    return get_registry().get(model)


__all__ = [
    'BaseFamily', 'DecayClass', 'FamilyRegistry', 'extrapolate_to_zero', 'get_family',
    'get_registry',
]
