"""
Shape families, analytic break sets, labelled samples and dataset files.
"""
