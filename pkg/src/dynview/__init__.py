"""Recurrent novel view synthesis for dynamic monocular videos.

Given a monocular video with known cameras, the model synthesizes views at
arbitrary target cameras and target time steps by warping the inputs into
dynamic plane sweep volumes and rendering them with a recurrent latent
network whose hidden state is reprojected between target viewpoints.
"""

__version__ = "0.1.0"
