"""
Terminal rendering of reports
"""
