"""Siamese community-preserving graph convolutional networks for paired brain networks.

Modules:
    linalg        dense helpers, symmetric eigensolvers, seeded k-means
    graph_core    NetworkInstance, Laplacian and propagation operators
    community     spectral communities, community centers, assignment cache
    model         encoder, losses, analytic gradients, checkpoints
    training      Siamese pairs, Adam, the training loop, embedding
    synthdata     synthetic paired-network generator and stratified splits
    dataio        dataset manifests and result writers
    eval_harness  classifier, metrics, experiments, grid search, ablations
    cli           ``scpgcn`` command-line entry point
"""

__version__ = "0.1.0"
