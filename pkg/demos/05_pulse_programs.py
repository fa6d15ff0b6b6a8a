"""
Writing pulse programs
======================

Sequences are plain text with units on every number. Loops are unrolled
when the program is compiled against a spin system.
"""

from nmrzeno.engine import run_timeline
from nmrzeno.seqlang import ParseError, check_stroboscopic, compile_ast, format_ast, parse
from nmrzeno.spinsys import formate_system, single_spin

text = """
# 36 pulses of 10 degrees make one full turn
loop 36 {
  pulse H flip=10deg phase=x
  delay 1ms
}
acquire H op=z
"""
ast = parse(text, "dante.seq")
print(format_ast(ast))
timeline = compile_ast(ast, single_spin())
print(f"{len(timeline.events)} events, {timeline.total_duration * 1e3:.1f} ms, <I_z> = {run_timeline(timeline, single_spin()):.6f}")

#%%
# Mistakes are reported with a file, line and column.
try:
    parse("pulse H flip=90 degrees\nacquire H", "typo.seq")
except ParseError as err:
    print(err)

#%%
# For two coupled spins, free-evolution windows should last a whole number
# of coupling periods so that the evolution returns to the identity.
system = formate_system(195.0)
for window in ("5.128205128205128ms", "2.564102564102564ms"):
    tl = compile_ast(parse(f"pulse C flip=90deg\ndelay {window}\npulse H flip=90deg\nacquire C"), system)
    report = check_stroboscopic(tl, system)
    print(f"window {window}: {'ok' if report.ok else 'not stroboscopic'}")
