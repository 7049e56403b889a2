"""VHDL-2008 generation: layer entities, weight ROMs, top level, testbench.

The generated datapath mirrors fixsim exactly: ROM-fed time-multiplexed
MAC groups of width P, one saturating round per output element, hard
activations as clamped shifts.  All files are plain generic VHDL (no
vendor primitives), UTF-8 with LF newlines, and regeneration is
byte-identical for the same model and config.

A bundle for a model named after its layers, e.g. a single 2->1 linear
layer, contains::

    rom_linear0.vhd  linear0.vhd  top.vhd  tb_top.vhd  synth.tcl  manifest.json

manifest.json is the machine-readable summary the node simulator loads in
place of a bitfile; it embeds the quantized weight codes so a device can
reproduce the accelerator's exact outputs.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path

from . import estimator, fixsim
from .estimator import DeviceProfile, GenConfig, ResourceEstimate
from .model_ir import Activation, io_lengths, op_count
from .quantize import (
    FixedPointFormat,
    QuantizedLinear,
    QuantizedLstm,
    QuantizedModel,
    QuantizedTensor,
    model_payload,
    to_fixed,
)

__all__ = [
    "AcceleratorManifest",
    "GenConfig",
    "ResourceOverflow",
    "RtlBundle",
    "extract_code_literals",
    "generate_rtl",
    "generate_testbench",
    "render_rom",
    "structural_check",
    "write_bundle",
]

_TB_SEED = 0xACCE1
MANIFEST_NAME = "manifest.json"


class ResourceOverflow(RuntimeError):
    """Estimated resources exceed the target device capacity."""

    def __init__(self, resource: str, estimate: int, capacity: int):
        super().__init__(
            f"estimated {resource} = {estimate} exceeds device capacity {capacity}"
            " (pass force=True / --force to generate anyway)"
        )
        self.resource = resource


@dataclass(frozen=True)
class AcceleratorManifest:
    top_entity: str
    fmt: FixedPointFormat
    clock_mhz: float
    cycles_per_inference: int
    ops: int
    resources: ResourceEstimate
    input_len: int
    output_len: int
    model: dict  # quantized payload (structure + integer codes)
    quantization: dict | None = None

    def to_dict(self) -> dict:
        doc = {
            "top_entity": self.top_entity,
            "format": {"total_bits": self.fmt.total_bits, "frac_bits": self.fmt.frac_bits},
            "clock_mhz": self.clock_mhz,
            "cycles_per_inference": self.cycles_per_inference,
            "ops": self.ops,
            "resources": self.resources.to_dict(),
            "input_len": self.input_len,
            "output_len": self.output_len,
        }
        if self.quantization is not None:
            doc["quantization"] = self.quantization
        doc["model"] = self.model
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "AcceleratorManifest":
        res = doc["resources"]
        return cls(
            top_entity=str(doc["top_entity"]),
            fmt=FixedPointFormat(
                int(doc["format"]["total_bits"]), int(doc["format"]["frac_bits"])
            ),
            clock_mhz=float(doc["clock_mhz"]),
            cycles_per_inference=int(doc["cycles_per_inference"]),
            ops=int(doc["ops"]),
            resources=ResourceEstimate(
                luts=int(res["luts"]),
                ffs=int(res["ffs"]),
                bram_bits=int(res["bram_bits"]),
                dsp_slices=int(res["dsp_slices"]),
            ),
            input_len=int(doc["input_len"]),
            output_len=int(doc["output_len"]),
            model=doc["model"],
            quantization=doc.get("quantization"),
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "AcceleratorManifest":
        return cls.from_dict(json.loads(data))


@dataclass(frozen=True)
class RtlBundle:
    files: dict[str, str]
    manifest: AcceleratorManifest


# ---------------------------------------------------------------------------
# literals and ROM rendering
# ---------------------------------------------------------------------------


def code_literal(code: int, total_bits: int) -> str:
    """Two's-complement VHDL bit-string literal, ceil(n/4) hex digits.

    Widths that are not a multiple of four use the VHDL-2008 sized form
    (e.g. 18x"0007F") so the literal stays exactly n bits wide.
    """
    digits = (total_bits + 3) // 4
    hexed = format(code & ((1 << total_bits) - 1), f"0{digits}X")
    if total_bits % 4 == 0:
        return f'x"{hexed}"'
    return f'{total_bits}x"{hexed}"'


def render_rom(tensor: QuantizedTensor, fmt: FixedPointFormat) -> str:
    """One hex literal per code, row-major, one per line.

    An empty tensor renders to an empty body (its depth constant is 0).
    """
    return "\n".join(code_literal(c, fmt.total_bits) for c in tensor.codes)


def _int_lit(value: int) -> str:
    # VHDL has no literal for integer'low; spell it arithmetically.
    if value == -(2**31):
        return "(-2147483647 - 1)"
    return str(value)


def _aggregate(lines: list[str], indent: str) -> str:
    if len(lines) == 1:
        return f"{indent}(0 => {lines[0]})"
    body = f",\n{indent}  ".join(lines)
    return f"{indent}(\n{indent}  {body}\n{indent})"


def _rom_constant(prefix: str, name: str, tensor: QuantizedTensor, fmt: FixedPointFormat) -> str:
    depth = len(tensor.codes)
    out = [f"  constant {prefix}_{name}_DEPTH : natural := {depth};"]
    if depth == 0:
        out.append(f"  -- {prefix}_{name} is empty")
        return "\n".join(out)
    lines = render_rom(tensor, fmt).split("\n")
    agg = _aggregate(lines, "  ")
    out.append(
        f"  constant {prefix}_{name} : {prefix.lower()}_code_array(0 to {depth - 1}) :=\n{agg};"
    )
    return "\n".join(out)


def _rom_package(
    pkg: str, prefix: str, fmt: FixedPointFormat, tensors: list[tuple[str, QuantizedTensor]]
) -> str:
    n = fmt.total_bits
    parts = [
        "library ieee;",
        "use ieee.std_logic_1164.all;",
        "use ieee.numeric_std.all;",
        "",
        f"package {pkg} is",
        f"  -- weight codes, two's complement Q{fmt}",
        f"  type {prefix.lower()}_code_array is array (natural range <>) of signed({n - 1} downto 0);",
    ]
    for name, tensor in tensors:
        parts.append(_rom_constant(prefix, name, tensor, fmt))
    parts.append(f"end package {pkg};")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# shared VHDL snippets
# ---------------------------------------------------------------------------

_HEADER = """library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
"""


def _requant_functions(fmt: FixedPointFormat) -> str:
    """saturate + requantize helpers, identical semantics to fixsim."""
    round_k = 0 if fmt.frac_bits == 0 else 1 << (fmt.frac_bits - 1)
    return f"""  constant ROUND_K : signed(ACC_BITS-1 downto 0) := to_signed({round_k}, ACC_BITS);
  constant CODE_MAX : signed(ACC_BITS-1 downto 0) := to_signed({_int_lit(fmt.max_code)}, ACC_BITS);
  constant CODE_MIN : signed(ACC_BITS-1 downto 0) := to_signed({_int_lit(fmt.min_code)}, ACC_BITS);

  function saturate_code(v : signed(ACC_BITS-1 downto 0)) return signed is
  begin
    if v > CODE_MAX then
      return resize(CODE_MAX, N_BITS);
    elsif v < CODE_MIN then
      return resize(CODE_MIN, N_BITS);
    else
      return resize(v, N_BITS);
    end if;
  end function saturate_code;

  -- round half up, then saturate: one rounding per output element
  function requantize(a : signed(ACC_BITS-1 downto 0)) return signed is
  begin
    return saturate_code(shift_right(a + ROUND_K, F_BITS));
  end function requantize;
"""


def _hard_activation_functions(fmt: FixedPointFormat) -> str:
    half = to_fixed(0.5, fmt)
    one = to_fixed(1.0, fmt)
    neg_one = to_fixed(-1.0, fmt)
    return f"""  constant HALF_ONE : signed(N_BITS-1 downto 0) := to_signed({half}, N_BITS);
  constant ONE_CODE : signed(N_BITS-1 downto 0) := to_signed({one}, N_BITS);
  constant NEG_ONE : signed(N_BITS-1 downto 0) := to_signed({_int_lit(neg_one)}, N_BITS);

  -- clamp(x/4 + 0.5, 0, 1); the shift is arithmetic
  function hard_sig(v : signed(N_BITS-1 downto 0)) return signed is
    variable t : signed(N_BITS-1 downto 0);
  begin
    t := shift_right(v, 2) + HALF_ONE;
    if t < 0 then
      return to_signed(0, N_BITS);
    elsif t > ONE_CODE then
      return ONE_CODE;
    else
      return t;
    end if;
  end function hard_sig;

  -- clamp(x, -1, 1)
  function hard_tan(v : signed(N_BITS-1 downto 0)) return signed is
  begin
    if v < NEG_ONE then
      return NEG_ONE;
    elsif v > ONE_CODE then
      return ONE_CODE;
    else
      return v;
    end if;
  end function hard_tan;
"""


def _entity_ports(name: str, in_bits: int, out_bits: int) -> str:
    return f"""entity {name} is
  port (
    clk   : in  std_logic;
    rst   : in  std_logic;
    start : in  std_logic;
    x_in  : in  std_logic_vector({in_bits - 1} downto 0);
    y_out : out std_logic_vector({out_bits - 1} downto 0);
    done  : out std_logic
  );
end entity {name};
"""


# ---------------------------------------------------------------------------
# layer entities
# ---------------------------------------------------------------------------


def _linear_entity(
    name: str, pkg: str, prefix: str, layer: QuantizedLinear, fmt: FixedPointFormat, cfg: GenConfig
) -> str:
    n = fmt.total_bits
    in_len, out_len = layer.in_features, layer.out_features
    lanes = cfg.parallel_macs
    chunks = math.ceil(in_len / lanes)
    acc_bits = estimator.accumulator_bits(n, in_len)
    return f"""{_HEADER}use work.{pkg}.all;

-- time-multiplexed fully-connected layer: {in_len} -> {out_len}, {lanes} MAC lane(s)
{_entity_ports(name, in_len * n, out_len * n)}
architecture rtl of {name} is
  constant IN_LEN   : natural := {in_len};
  constant OUT_LEN  : natural := {out_len};
  constant LANES    : natural := {lanes};
  constant CHUNKS   : natural := {chunks};
  constant N_BITS   : natural := {n};
  constant F_BITS   : natural := {fmt.frac_bits};
  constant ACC_BITS : natural := {acc_bits};

{_requant_functions(fmt)}
  function x_elem(bus : std_logic_vector; idx : natural) return signed is
  begin
    return signed(bus((idx + 1) * N_BITS - 1 downto idx * N_BITS));
  end function x_elem;

  type state_t is (s_idle, s_mac, s_store);
  signal state  : state_t := s_idle;
  signal row    : natural range 0 to OUT_LEN - 1 := 0;
  signal chunk  : natural range 0 to CHUNKS - 1 := 0;
  signal acc    : signed(ACC_BITS - 1 downto 0) := (others => '0');
  signal y_reg  : std_logic_vector(OUT_LEN * N_BITS - 1 downto 0) := (others => '0');
  signal done_r : std_logic := '0';
begin
  y_out <= y_reg;
  done  <= done_r;

  main : process (clk)
    variable v_acc : signed(ACC_BITS - 1 downto 0);
    variable v_idx : natural;
  begin
    if rising_edge(clk) then
      if rst = '1' then
        state  <= s_idle;
        done_r <= '0';
      else
        case state is
          when s_idle =>
            if start = '1' then
              done_r <= '0';
              row    <= 0;
              chunk  <= 0;
              acc    <= shift_left(resize({prefix}_BIAS(0), ACC_BITS), F_BITS);
              state  <= s_mac;
            end if;

          when s_mac =>
            v_acc := acc;
            for lane in 0 to LANES - 1 loop
              v_idx := chunk * LANES + lane;
              if v_idx < IN_LEN then
                v_acc := v_acc + resize(
                  {prefix}_WEIGHTS(row * IN_LEN + v_idx) * x_elem(x_in, v_idx), ACC_BITS);
              end if;
            end loop;
            acc <= v_acc;
            if chunk = CHUNKS - 1 then
              state <= s_store;
            else
              chunk <= chunk + 1;
            end if;

          when s_store =>
            y_reg((row + 1) * N_BITS - 1 downto row * N_BITS) <= std_logic_vector(requantize(acc));
            if row = OUT_LEN - 1 then
              done_r <= '1';
              state  <= s_idle;
            else
              row   <= row + 1;
              chunk <= 0;
              acc   <= shift_left(resize({prefix}_BIAS(row + 1), ACC_BITS), F_BITS);
            end if;
        end case;
      end if;
    end if;
  end process main;
end architecture rtl;
"""


def _lstm_entity(
    name: str, pkg: str, prefix: str, layer: QuantizedLstm, fmt: FixedPointFormat, cfg: GenConfig
) -> str:
    n = fmt.total_bits
    in_len, h_len, steps = layer.input_size, layer.hidden_size, layer.steps
    concat = in_len + h_len
    lanes = cfg.parallel_macs
    chunks = math.ceil(concat / lanes)
    acc_bits = estimator.accumulator_bits(n, concat)
    return f"""{_HEADER}use work.{pkg}.all;

-- recurrent cell, gates i/f/g/o over [x, h], unrolled in time: in={in_len} h={h_len} steps={steps}
{_entity_ports(name, steps * in_len * n, h_len * n)}
architecture rtl of {name} is
  constant IN_LEN   : natural := {in_len};
  constant H_LEN    : natural := {h_len};
  constant STEPS    : natural := {steps};
  constant CONCAT   : natural := {concat};
  constant LANES    : natural := {lanes};
  constant CHUNKS   : natural := {chunks};
  constant N_BITS   : natural := {n};
  constant F_BITS   : natural := {fmt.frac_bits};
  constant ACC_BITS : natural := {acc_bits};

{_requant_functions(fmt)}
{_hard_activation_functions(fmt)}
  type code_vec is array (natural range <>) of signed(N_BITS - 1 downto 0);

  signal h_reg : code_vec(0 to H_LEN - 1) := (others => (others => '0'));
  signal c_reg : code_vec(0 to H_LEN - 1) := (others => (others => '0'));
  signal z_reg : code_vec(0 to 4 * H_LEN - 1) := (others => (others => '0'));

  -- gate input k of the concatenated [x_t, h] vector
  function concat_elem(
    bus  : std_logic_vector;
    hvec : code_vec;
    st   : natural;
    idx  : natural
  ) return signed is
  begin
    if idx < IN_LEN then
      return signed(bus((st * IN_LEN + idx + 1) * N_BITS - 1 downto (st * IN_LEN + idx) * N_BITS));
    else
      return hvec(idx - IN_LEN);
    end if;
  end function concat_elem;

  type state_t is (s_idle, s_gate_mac, s_gate_store, s_cell, s_latch);
  signal state  : state_t := s_idle;
  signal step   : natural range 0 to STEPS - 1 := 0;
  signal grow   : natural range 0 to 4 * H_LEN - 1 := 0;
  signal chunk  : natural range 0 to CHUNKS - 1 := 0;
  signal ew_j   : natural range 0 to H_LEN - 1 := 0;
  signal acc    : signed(ACC_BITS - 1 downto 0) := (others => '0');
  signal y_reg  : std_logic_vector(H_LEN * N_BITS - 1 downto 0) := (others => '0');
  signal done_r : std_logic := '0';
begin
  y_out <= y_reg;
  done  <= done_r;

  main : process (clk)
    variable v_acc : signed(ACC_BITS - 1 downto 0);
    variable v_idx : natural;
    variable v_i, v_f, v_g, v_o : signed(N_BITS - 1 downto 0);
    variable v_c, v_t : signed(N_BITS - 1 downto 0);
  begin
    if rising_edge(clk) then
      if rst = '1' then
        state  <= s_idle;
        done_r <= '0';
      else
        case state is
          when s_idle =>
            if start = '1' then
              done_r <= '0';
              h_reg  <= (others => (others => '0'));
              c_reg  <= (others => (others => '0'));
              step   <= 0;
              grow   <= 0;
              chunk  <= 0;
              acc    <= shift_left(resize({prefix}_GATE_BIAS(0), ACC_BITS), F_BITS);
              state  <= s_gate_mac;
            end if;

          when s_gate_mac =>
            v_acc := acc;
            for lane in 0 to LANES - 1 loop
              v_idx := chunk * LANES + lane;
              if v_idx < CONCAT then
                v_acc := v_acc + resize(
                  {prefix}_GATE_WEIGHTS(grow * CONCAT + v_idx) *
                  concat_elem(x_in, h_reg, step, v_idx), ACC_BITS);
              end if;
            end loop;
            acc <= v_acc;
            if chunk = CHUNKS - 1 then
              state <= s_gate_store;
            else
              chunk <= chunk + 1;
            end if;

          when s_gate_store =>
            z_reg(grow) <= requantize(acc);
            if grow = 4 * H_LEN - 1 then
              ew_j  <= 0;
              state <= s_cell;
            else
              grow  <= grow + 1;
              chunk <= 0;
              acc   <= shift_left(resize({prefix}_GATE_BIAS(grow + 1), ACC_BITS), F_BITS);
              state <= s_gate_mac;
            end if;

          when s_cell =>
            -- c' = requant(f*c + i*g); h' = requant(o * tanh(c')), one j per cycle
            v_i := hard_sig(z_reg(ew_j));
            v_f := hard_sig(z_reg(H_LEN + ew_j));
            v_g := hard_tan(z_reg(2 * H_LEN + ew_j));
            v_o := hard_sig(z_reg(3 * H_LEN + ew_j));
            v_c := requantize(resize(v_f * c_reg(ew_j), ACC_BITS) + resize(v_i * v_g, ACC_BITS));
            v_t := hard_tan(v_c);
            c_reg(ew_j) <= v_c;
            h_reg(ew_j) <= requantize(resize(v_o * v_t, ACC_BITS));
            if ew_j = H_LEN - 1 then
              state <= s_latch;
            else
              ew_j <= ew_j + 1;
            end if;

          when s_latch =>
            if step = STEPS - 1 then
              for j in 0 to H_LEN - 1 loop
                y_reg((j + 1) * N_BITS - 1 downto j * N_BITS) <= std_logic_vector(h_reg(j));
              end loop;
              done_r <= '1';
              state  <= s_idle;
            else
              step  <= step + 1;
              grow  <= 0;
              chunk <= 0;
              acc   <= shift_left(resize({prefix}_GATE_BIAS(0), ACC_BITS), F_BITS);
              state <= s_gate_mac;
            end if;
        end case;
      end if;
    end if;
  end process main;
end architecture rtl;
"""


def _activation_entity(
    name: str, layer: Activation, length: int, fmt: FixedPointFormat, cfg: GenConfig
) -> str:
    n = fmt.total_bits
    lanes = cfg.parallel_macs
    chunks = math.ceil(length / lanes)
    body = {
        "hard_sigmoid": "    return hard_sig(v);",
        "hard_tanh": "    return hard_tan(v);",
        "relu": """    if v < 0 then
      return to_signed(0, N_BITS);
    else
      return v;
    end if;""",
    }[layer.activation]
    return f"""{_HEADER}
-- elementwise {layer.activation} over {length} element(s)
{_entity_ports(name, length * n, length * n)}
architecture rtl of {name} is
  constant LEN    : natural := {length};
  constant LANES  : natural := {lanes};
  constant CHUNKS : natural := {chunks};
  constant N_BITS : natural := {n};

{_hard_activation_functions(fmt)}
  function act(v : signed(N_BITS - 1 downto 0)) return signed is
  begin
{body}
  end function act;

  type state_t is (s_idle, s_apply);
  signal state  : state_t := s_idle;
  signal chunk  : natural range 0 to CHUNKS - 1 := 0;
  signal y_reg  : std_logic_vector(LEN * N_BITS - 1 downto 0) := (others => '0');
  signal done_r : std_logic := '0';
begin
  y_out <= y_reg;
  done  <= done_r;

  main : process (clk)
    variable v_idx : natural;
  begin
    if rising_edge(clk) then
      if rst = '1' then
        state  <= s_idle;
        done_r <= '0';
      else
        case state is
          when s_idle =>
            if start = '1' then
              done_r <= '0';
              chunk  <= 0;
              state  <= s_apply;
            end if;

          when s_apply =>
            for lane in 0 to LANES - 1 loop
              v_idx := chunk * LANES + lane;
              if v_idx < LEN then
                y_reg((v_idx + 1) * N_BITS - 1 downto v_idx * N_BITS) <=
                  std_logic_vector(act(signed(x_in((v_idx + 1) * N_BITS - 1 downto v_idx * N_BITS))));
              end if;
            end loop;
            if chunk = CHUNKS - 1 then
              done_r <= '1';
              state  <= s_idle;
            else
              chunk <= chunk + 1;
            end if;
        end case;
      end if;
    end if;
  end process main;
end architecture rtl;
"""


def _top_entity(entities: list[str], widths: list[int]) -> str:
    """Chain the layer entities with a start/done sequencer."""
    n_layers = len(entities)
    in_bits = widths[0]
    out_bits = widths[-1]
    buses = "\n".join(
        f"  signal bus{k} : std_logic_vector({w - 1} downto 0);" for k, w in enumerate(widths)
    )
    instances = "\n".join(
        f"""  u{k} : entity work.{ent}
    port map (
      clk   => clk,
      rst   => rst,
      start => starts({k}),
      x_in  => bus{k},
      y_out => bus{k + 1},
      done  => dones({k})
    );"""
        for k, ent in enumerate(entities)
    )
    last = n_layers - 1
    return f"""{_HEADER}
-- layer chain sequencer: runs one layer at a time, input to output
{_entity_ports("top", in_bits, out_bits)}
architecture rtl of top is
  constant N_LAYERS : natural := {n_layers};

  signal starts : std_logic_vector(0 to N_LAYERS - 1) := (others => '0');
  signal dones  : std_logic_vector(0 to N_LAYERS - 1);
{buses}

  type phase_t is (p_idle, p_kick, p_wait);
  signal phase  : phase_t := p_idle;
  signal lidx   : natural range 0 to N_LAYERS - 1 := 0;
  signal done_r : std_logic := '0';
begin
  bus0  <= x_in;
  y_out <= bus{n_layers};
  done  <= done_r;

{instances}

  seq : process (clk)
  begin
    if rising_edge(clk) then
      if rst = '1' then
        phase  <= p_idle;
        done_r <= '0';
        starts <= (others => '0');
      else
        case phase is
          when p_idle =>
            if start = '1' then
              done_r    <= '0';
              lidx      <= 0;
              starts(0) <= '1';
              phase     <= p_kick;
            end if;

          when p_kick =>
            starts(lidx) <= '0';
            phase        <= p_wait;

          when p_wait =>
            if dones(lidx) = '1' then
              if lidx = {last} then
                done_r <= '1';
                phase  <= p_idle;
              else
                lidx             <= lidx + 1;
                starts(lidx + 1) <= '1';
                phase            <= p_kick;
              end if;
            end if;
        end case;
      end if;
    end if;
  end process seq;
end architecture rtl;
"""


# ---------------------------------------------------------------------------
# testbench
# ---------------------------------------------------------------------------


def default_vectors(qmodel: QuantizedModel, count: int = 3) -> list[list[int]]:
    """Deterministic stimulus: zeros, an alternating pattern, seeded noise."""
    fmt = qmodel.fmt
    in_len = qmodel.graph.input_len
    vectors = [[0] * in_len]
    if count > 1:
        a, b = to_fixed(0.5, fmt), to_fixed(-0.25, fmt)
        vectors.append([a if i % 2 == 0 else b for i in range(in_len)])
    rng = random.Random(_TB_SEED)
    lo, hi = fmt.min_code // 4, fmt.max_code // 4
    for _ in range(max(0, count - 2)):
        vectors.append([rng.randint(lo, hi) for _ in range(in_len)])
    return vectors[:count]


def _vector_aggregate(codes: list[int], n: int) -> str:
    lits = [code_literal(c, n) for c in codes]
    if len(lits) == 1:
        return f"(0 => {lits[0]})"
    return "(" + ", ".join(lits) + ")"


def generate_testbench(qmodel: QuantizedModel, vectors: list[list[int]]) -> str:
    """Self-checking bench: drives vectors, compares against fixsim golden outputs."""
    fmt = qmodel.fmt
    n = fmt.total_bits
    in_len = qmodel.graph.input_len
    out_len = io_lengths(qmodel.graph)[-1][1]
    golden = [fixsim.infer_fixed(qmodel, vec)[0] for vec in vectors]
    stim_rows = ",\n".join(
        f"    {v} => {_vector_aggregate(vec, n)}" for v, vec in enumerate(vectors)
    )
    gold_rows = ",\n".join(
        f"    {v} => {_vector_aggregate(out, n)}" for v, out in enumerate(golden)
    )
    return f"""{_HEADER}
-- self-checking bench; EXPECTED holds bit-exact software-model outputs
entity tb_top is
end entity tb_top;

architecture sim of tb_top is
  constant N_BITS      : natural := {n};
  constant INPUT_LEN   : natural := {in_len};
  constant OUTPUT_LEN  : natural := {out_len};
  constant NUM_VECTORS : natural := {len(vectors)};
  constant CLK_PERIOD  : time := 10 ns;

  type in_codes is array (0 to INPUT_LEN - 1) of std_logic_vector(N_BITS - 1 downto 0);
  type out_codes is array (0 to OUTPUT_LEN - 1) of std_logic_vector(N_BITS - 1 downto 0);
  type stim_array is array (0 to NUM_VECTORS - 1) of in_codes;
  type gold_array is array (0 to NUM_VECTORS - 1) of out_codes;

  constant STIMULI : stim_array := (
{stim_rows}
  );

  constant EXPECTED : gold_array := (
{gold_rows}
  );

  signal clk   : std_logic := '0';
  signal rst   : std_logic := '1';
  signal start : std_logic := '0';
  signal done  : std_logic;
  signal x_bus : std_logic_vector(INPUT_LEN * N_BITS - 1 downto 0) := (others => '0');
  signal y_bus : std_logic_vector(OUTPUT_LEN * N_BITS - 1 downto 0);
begin
  dut : entity work.top
    port map (
      clk   => clk,
      rst   => rst,
      start => start,
      x_in  => x_bus,
      y_out => y_bus,
      done  => done
    );

  clk <= not clk after CLK_PERIOD / 2;

  stim : process
    variable cycles : natural;
  begin
    wait for 3 * CLK_PERIOD;
    rst <= '0';
    wait until rising_edge(clk);
    for v in 0 to NUM_VECTORS - 1 loop
      for i in 0 to INPUT_LEN - 1 loop
        x_bus((i + 1) * N_BITS - 1 downto i * N_BITS) <= STIMULI(v)(i);
      end loop;
      start <= '1';
      wait until rising_edge(clk);
      start <= '0';
      cycles := 0;
      while done /= '1' loop
        wait until rising_edge(clk);
        cycles := cycles + 1;
      end loop;
      for i in 0 to OUTPUT_LEN - 1 loop
        assert y_bus((i + 1) * N_BITS - 1 downto i * N_BITS) = EXPECTED(v)(i)
          report "vector " & integer'image(v) & " element " & integer'image(i) & ": output mismatch"
          severity failure;
      end loop;
      report "vector " & integer'image(v) & " ok after " & integer'image(cycles) & " cycles";
      wait until rising_edge(clk);
    end loop;
    report "ALL VECTORS PASSED";
    std.env.stop;
  end process stim;
end architecture sim;
"""


# ---------------------------------------------------------------------------
# bundle assembly
# ---------------------------------------------------------------------------


def _synth_script(vhdl_files: list[str], device_name: str) -> str:
    files = " \\\n    ".join(vhdl_files)
    return f"""# Synthesis stub (not executed by this toolchain or its tests).
# Adjust the part for your board, then source from your vendor Tcl shell.
set part {device_name}
read_vhdl -vhdl2008 [list \\
    {files} \\
]
synth_design -top top -part $part
report_utilization -file utilization.rpt
report_power -file power.rpt
# Bitstream generation is intentionally left to the downstream flow.
"""


def generate_rtl(
    qmodel: QuantizedModel,
    cfg: GenConfig,
    device: DeviceProfile | None = None,
    force: bool = False,
    quantization: dict | None = None,
) -> RtlBundle:
    """Emit the full bundle for one model.

    Raises ResourceOverflow when the estimate exceeds the device capacity
    and force is False.
    """
    fixsim.check_io_consistency(qmodel)
    fmt = qmodel.fmt
    resources, fits = estimator.resource_estimate(qmodel, cfg, device)
    if device is not None and not fits and not force:
        name = resources.first_overflow(device.capacity) or "resources"
        raise ResourceOverflow(
            name, getattr(resources, name), getattr(device.capacity, name)
        )

    lens = io_lengths(qmodel.graph)
    files: dict[str, str] = {}
    entities: list[str] = []
    widths = [qmodel.graph.input_len * fmt.total_bits]
    counters = {"linear": 0, "lstm": 0, "activation": 0}

    for layer, (in_len, out_len) in zip(qmodel.layers, lens):
        if isinstance(layer, QuantizedLinear):
            idx = counters["linear"]
            counters["linear"] += 1
            name = f"linear{idx}"
            pkg = f"rom_{name}"
            prefix = name.upper()
            files[f"{pkg}.vhd"] = _rom_package(
                pkg, prefix, fmt, [("WEIGHTS", layer.weights), ("BIAS", layer.bias)]
            )
            files[f"{name}.vhd"] = _linear_entity(name, pkg, prefix, layer, fmt, cfg)
        elif isinstance(layer, QuantizedLstm):
            idx = counters["lstm"]
            counters["lstm"] += 1
            name = f"lstm{idx}"
            pkg = f"rom_{name}"
            prefix = name.upper()
            files[f"{pkg}.vhd"] = _rom_package(
                pkg,
                prefix,
                fmt,
                [("GATE_WEIGHTS", layer.gate_weights), ("GATE_BIAS", layer.gate_bias)],
            )
            files[f"{name}.vhd"] = _lstm_entity(name, pkg, prefix, layer, fmt, cfg)
        else:
            idx = counters["activation"]
            counters["activation"] += 1
            name = f"activation{idx}"
            files[f"{name}.vhd"] = _activation_entity(name, layer, in_len, fmt, cfg)
        entities.append(name)
        widths.append(out_len * fmt.total_bits)

    files["top.vhd"] = _top_entity(entities, widths)
    files["tb_top.vhd"] = generate_testbench(qmodel, default_vectors(qmodel))

    manifest = AcceleratorManifest(
        top_entity="top",
        fmt=fmt,
        clock_mhz=cfg.clock_mhz,
        cycles_per_inference=estimator.cycle_count(qmodel, cfg),
        ops=op_count(qmodel.graph),
        resources=resources,
        input_len=qmodel.graph.input_len,
        output_len=lens[-1][1],
        model=model_payload(qmodel),
        quantization=quantization,
    )
    vhdl_files = [f for f in files if f.endswith(".vhd") and f != "tb_top.vhd"]
    device_part = device.name if device is not None else "generic-part"
    files["synth.tcl"] = _synth_script(vhdl_files, device_part)
    files[MANIFEST_NAME] = manifest.to_json()
    return RtlBundle(files=files, manifest=manifest)


def write_bundle(bundle: RtlBundle, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in bundle.files.items():
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# introspection helpers (used by tests and the structural self-check)
# ---------------------------------------------------------------------------

_LITERAL_RE = re.compile(r'(?:\d+)?x"([0-9A-F_]+)"')


def extract_code_literals(text: str, total_bits: int, section: str | None = None) -> list[int]:
    """Decode hex literals back to signed codes, in file order.

    With section given, only literals inside that constant's aggregate are
    decoded.
    """
    if section is not None:
        start = text.index(f"constant {section}")
        end = text.index(");", start)
        text = text[start:end]
    codes = []
    for match in _LITERAL_RE.finditer(text):
        raw = int(match.group(1).replace("_", ""), 16) & ((1 << total_bits) - 1)
        if raw >= 1 << (total_bits - 1):
            raw -= 1 << total_bits
        codes.append(raw)
    return codes


_BLOCK_RES = {
    "entity": (
        re.compile(r"^\s*entity\s+(\w+)\s+is", re.M),
        re.compile(r"^\s*end\s+entity\s+(\w+);", re.M),
    ),
    "architecture": (
        re.compile(r"^\s*architecture\s+(\w+)\s+of\s+\w+\s+is", re.M),
        re.compile(r"^\s*end\s+architecture\s+(\w+);", re.M),
    ),
    "package": (
        re.compile(r"^\s*package\s+(\w+)\s+is", re.M),
        re.compile(r"^\s*end\s+package\s+(\w+);", re.M),
    ),
}


def structural_check(text: str) -> list[str]:
    """Cheap well-formedness scan: every entity/architecture/package block closes."""
    problems = []
    for kind, (open_re, close_re) in _BLOCK_RES.items():
        opens = [m.group(1) for m in open_re.finditer(text)]
        closes = [m.group(1) for m in close_re.finditer(text)]
        if sorted(opens) != sorted(closes):
            problems.append(f"unbalanced {kind} blocks: open={opens} close={closes}")
    return problems
