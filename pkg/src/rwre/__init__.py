"""Random walks in random resistor environments on finite graph
truncations: effective resistance and flow-energy diagnostics, bond
percolation clusters, truncation couplings, and the construction of a
staircase resistance distribution that forces recurrence."""

from .environment import (AtomicDistribution, Environment,
                          ExponentialDistribution, ResistanceDistribution,
                          StaircaseMu, ThresholdSpec, dist_mean,
                          distribution_from_json, open_subgraph,
                          sample_environment, truncate_at)
from .graphs import (CapacityError, FiniteGraph, GraphWithSink, ParseError,
                     build_lattice_ball, build_tree, load_graph,
                     max_degree_within, wrap_with_sink)
from .percolation import (Cluster, PercolationSample, cluster_of,
                          cluster_resistance_to_sink, clusters, percolate,
                          percolation_environment)
from .resistance import (EnergyReport, Flow, InfiniteResistanceError,
                         NotSeriesParallelError, VoltageSolution,
                         effective_resistance, expected_energy_bound,
                         flow_energy, series_parallel_reduce, solve_voltages,
                         unit_current_flow)
from .construction import (ChooseNResult, ConstructionReport,
                           ConstructionState, NSearchExhausted, SearchConfig,
                           build_staircase, choose_N, corrupt_level,
                           extend_mu, gamma_for_policy, next_gamma,
                           verify_recurrence_bound)
from .trees import (BranchingEstimate, TreeFlow, TreeSpec, branching_number,
                    build_decay_flow, critical_probability,
                    flow_energy_on_tree, tree_max_flow)
from .walk import (ContainmentViolationError, CoupledTraces,
                   EventClassification, LevelParams, ReturnFailureEstimate,
                   TransitionKernel, WalkTrace, classify_events,
                   estimate_return_failure, first_return_time, run_coupled,
                   run_walk, transition_probabilities)

__version__ = "0.1.0"
