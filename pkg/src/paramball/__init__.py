"""Differentiable SH-lit mesh rendering and parametric adversarial attacks.

Modules:

- ``sh``: real spherical harmonics and their direction gradients
- ``mesh``, ``shapes``: triangle meshes, normals and their vertex Jacobians
- ``lighting``, ``skymodel``: SH lighting, environment projection, skylight fits
- ``raster``: cameras and the z-buffer fragment rasterizer
- ``shading``: SH shading and sparse image Jacobians
- ``adversary``: attack cost, chain-rule steps and the attack loop
- ``classifier``, ``protocol``: in-process toy classifier and external providers
- ``cli``: the ``paramball`` command
"""

__version__ = "0.1.0"
