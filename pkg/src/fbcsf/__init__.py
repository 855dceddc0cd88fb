"""Free boundary curve shortening flow in convex planar domains.

Modules: ``domain`` (convex boundaries and their frames), ``billiard``
(single-bounce reflected distance), ``curve`` (polylines meeting the boundary
orthogonally), ``chord_arc`` (profiles on the doubled curve), ``flow``
(explicit time stepping and extinction analysis), ``verification`` (checks
over flow traces) and ``cli``.
"""

__version__ = "0.1.0"
