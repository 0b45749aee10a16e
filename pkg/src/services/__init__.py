"""Codecs, noise synthesis, learner, ensembles, uncertainty, relabeling and the pipeline."""
