"""Race and ethnicity gaps in homeownership at census-tract level.

Assessment-roll parcels are classified by owner type, individually-owned
parcels get a race distribution (BISG or an external model), and tract
profiles are compared with census population shares.
"""
from .domain import GeoId, OwnerClass, RaceCategory, RaceDistribution
from .pipeline import RunConfig, run_pipeline

__version__ = "0.1.0"

__all__ = ["GeoId", "OwnerClass", "RaceCategory", "RaceDistribution", "RunConfig", "run_pipeline", "__version__"]
