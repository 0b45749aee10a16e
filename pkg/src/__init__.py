"""Noisy segmentation mask corruption, uncertainty-based detection and relabeling."""
