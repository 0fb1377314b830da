"""cfgkit: control-flow-graph reduction, featurization, explanation fusion,
prototype matching, and attention-guided ensembling for graph-based
malware-analysis pipelines."""

__version__ = "0.1.0"
