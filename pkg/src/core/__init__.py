"""Core protocol modules for wtransfer"""
