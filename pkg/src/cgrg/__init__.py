"""Simulator and numerical toolkit for colored geometric random graphs."""

from .distortion import (DistortionFn, hamming_color, in_ball, make_hamming,
                         make_squared_degree, make_table, sigma_n,
                         squared_degree, table_from_csv)
from .empirical import (DEFAULT_CAP, LocalView, Measure, TypePair,
                        empirical_measure, enumerate_views, joint_empirical,
                        local_views, measure_from_csv, measure_to_csv,
                        pair_measure, poisson_gof, psi,
                        sample_soft_conditioned, total_variation,
                        type_pair_of_graph, view_arrays)
from .graphs import (ColoredGeometricGraph, ModelParams,
                     ball_volume_coefficient, edges_by_scan, graph_from_text,
                     graph_to_text, load_graph, sample_graph,
                     sample_graph_pair, save_graph,
                     torus_distance, verify_edges)
from .kernel import (PoissonFiberKernel, contract_J_sigma, p_mass,
                     product_mass, rate_J1, relative_entropy)
from .ratedist import (AlphaBrackets, BallExponent, CumulantEstimate,
                       CumulantFn, EmpiricalCumulant, RDCurve, alpha_brackets,
                       empirical_cumulant, legendre,
                       make_single_letter_cumulant, mc_ball_exponent,
                       rd_curve, single_letter_cumulant)
from .wsn import (WsnDataset, WsnFit, dataset_from_graph, fit_from_dataset,
                  load_dataset, omega_limit, rd_step, rd_threshold,
                  save_dataset)

__version__ = "0.1.0"
