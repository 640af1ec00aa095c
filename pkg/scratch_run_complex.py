import json

from hystereq import pipeline as pl

cfg = pl.config_for("complex", out_dir="/tmp/hq_runs/complex")
rep = pl.run(cfg)
print("out:", rep["out_dir"])
print("timings:", rep["timings"])
print("refine:", rep["refine"])
eqs = rep["model"].equations()
print("motion:", eqs["motion"])
print("link:  ", eqs["link"])
print("restarts:", rep["link_restarts"])
for row in rep["rows"]:
    print(row)
