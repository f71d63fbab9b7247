"""
Experiment runners, presets and output writers for the command center.
"""
