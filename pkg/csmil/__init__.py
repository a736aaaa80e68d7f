"""Cluster-level sparse multiple instance learning"""
