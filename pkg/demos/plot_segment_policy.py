"""
Segmenting a privacy policy
===========================

A policy page is turned into numbered text segments before any model sees
it. Headings get a leading ``*``, table rows carry their header row, and a
paragraph followed by a bullet list is merged into one segment so the list
keeps its lead-in sentence.
"""
from policyflow.segmenter import PolicyDocument, neighbors, segment_html

HTML = """
<html><body>
  <nav><a href="/">Home</a></nav>
  <h1>Privacy notice</h1>
  <p>When you register, we collect:</p>
  <ul><li>your name</li><li>your email address</li></ul>
  <table>
    <tr><th>Data</th><th>Recipient</th></tr>
    <tr><td>VIN</td><td>Service partner</td></tr>
  </table>
  <script>trackVisit()</script>
</body></html>
"""

segments = segment_html(PolicyDocument("demo", "Example Motors", HTML))

# %%
# Every segment has an index, a kind and the text the agents will read.
for s in segments:
    print(s.index, s.kind, repr(s.text))

# %%
# The method agent also reads the neighbouring segments; at the edges the
# missing neighbour is ``None``.
prev, nxt = neighbors(segments, 1)
print("before:", prev.text if prev else None)
print("after: ", nxt.text if nxt else None)
