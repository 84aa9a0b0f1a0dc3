"""Physics-informed variational-embedding GAN for 1D elliptic SDEs."""
