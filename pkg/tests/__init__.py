"""Test suite for the spectral bounds toolkit"""
