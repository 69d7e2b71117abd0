"""Test suite for the CRF toolkit"""
