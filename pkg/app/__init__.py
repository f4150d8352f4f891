"""Command-line application and run configuration models"""
