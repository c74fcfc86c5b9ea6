"""Zonotope-based symbolic controller synthesis for LTL tasks.

The package is organized as a pipeline:

  geometry     set representations (zonotopes, constrained zonotopes) and the
               linear-program queries everything else is built on
  covering     decomposition of a rectangular workspace into overlapping cells
  topograph    cell adjacency graph, path search and realization checking
  ltlspec      LTL parsing, lasso-word model checking and Buechi products
  abstraction  per-cell lattice abstractions and symbolic transition models
  synthesis    fixed-point controller synthesis on symbolic models
  runtime      controller refinement and closed-loop simulation
  scenario     declarative scenario configuration
  cli          command-line pipeline driver
"""

__version__ = "0.1.0"
