"""spl-forge: workbench for stable parallel looped dynamical systems.

Build looped tracks (physical systems of balls, valleys, and sub-loops), map
them onto reaction networks with matched energy levels and catalysts,
simulate both kinds of system against an explicit energy ledger, drive pump
agents that act as universal catalysts, and analyze structure (strongly
connected components, generator sets, closure) and dynamics (recurrence,
classification, paired survival experiments, random-split regeneration).
"""

from .core import (
    CatalogError,
    EnergyEnvironment,
    EnergyLedger,
    NetworkValidationError,
    Reaction,
    ReactionNetwork,
    Species,
    Violation,
    delta_energy,
    species_digraph,
    validate_network,
)
from .track import (
    Ball,
    PhysicalSystem,
    Segment,
    TrackGraph,
    add_valleys,
    build_incline,
    close_loop,
    iterate_construction,
    link_systems,
    merge_systems,
    place_balls,
    valley_to_loop,
)
from .physics import (
    compare_persistence,
    measure_restart_energy,
    persistence_time,
    simulate_physical,
)
from .mapping import (
    MappingConstraints,
    MappingResult,
    SpeciesCatalog,
    UnsatisfiableMappingError,
    link_networks,
    map_physical_to_chemical,
    merge_networks,
    refine_with_cycle,
    required_species_count,
)
from .kinetics import (
    ChemicalSimulation,
    RateModel,
    half_life_to_rate,
    propensity,
    simulate_chemical,
)
from .pumps import (
    Pump,
    SelectivityFilter,
    SustainabilityReport,
    apply_choke,
    attach_fuel_loop,
    catalytic_factor,
    jump_start,
    make_pump,
    pump_cycle_step,
    resolve_backpressure,
    sustainability_check,
)
from .analysis import (
    ClassifyConfig,
    ExperimentStats,
    GeneratorSets,
    SCCDecomposition,
    SPLReport,
    SplitReport,
    classify_spl,
    closure,
    complexity_measure,
    enumerate_generators,
    find_sccs,
    persistence_experiment,
    split_test,
    strip_uphill_reactions,
)
from .netfile import parse_catalog, parse_network, serialize_catalog, serialize_network

__version__ = "0.1.0"
