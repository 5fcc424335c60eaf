"""Utility modules for wtransfer"""
