"""Numerical verification of Li-Yau gradient bounds - root package."""
# DO NOT CHANGE OR ADD ANYTHING HERE
import pkg_resources
pkg_resources.declare_namespace(__name__)
