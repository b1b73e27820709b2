r"""
Running the verifier
====================

Each check returns a report with measured quantities and a verdict. The same
suite is available from the command line as ``repdyn verify``.
"""
from repdyn.verifier import run_suite, summary_table

reports = run_suite(["prop1", "prop5", "prop7", "lemmas"])
print(summary_table(reports))

#%%
# Reports serialize to one JSON object per line, without wall-clock times.
print(reports[0].to_json())
