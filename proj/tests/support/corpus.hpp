#pragma once

// Deterministic generator of small Solidity contracts for tests. Label-1
// templates move deposits of later participants to earlier ones; label-0
// templates are tokens, wallets, votes and sales.

#include "sourcep/record.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sourcep::testing {

class CorpusGenerator {
public:
  explicit CorpusGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string ponzi() {
    switch (pick(4)) {
      case 0: return chain_payout();
      case 1: return referral();
      case 2: return dividend_loop();
      default: return doubler();
    }
  }

  std::string benign() {
    switch (pick(5)) {
      case 0: return token();
      case 1: return storage();
      case 2: return ballot();
      case 3: return crowdsale();
      default: return escrow();
    }
  }

  /// `positives` label-1 and `negatives` label-0 records with idx 0..n-1,
  /// interleaved pseudo-randomly.
  std::vector<ContractRecord> corpus(std::size_t positives, std::size_t negatives) {
    std::vector<int> labels(positives, 1);
    labels.insert(labels.end(), negatives, 0);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[pick(i)]);
    std::vector<ContractRecord> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      out.push_back(ContractRecord{static_cast<std::int64_t>(i), labels[i] ? ponzi() : benign(),
                                   labels[i]});
    return out;
  }

  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

private:
  std::mt19937_64 rng_;

  std::string one_of(std::initializer_list<const char*> xs) {
    auto it = xs.begin();
    std::advance(it, pick(xs.size()));
    return *it;
  }
  std::string num(int lo, int hi) { return std::to_string(lo + static_cast<int>(pick(hi - lo + 1))); }
  std::string header() {
    return "pragma solidity ^0.4." + num(11, 25) + ";\n\n";
  }
  std::string name(std::initializer_list<const char*> stems) {
    return one_of(stems) + one_of({"", "X", "Pro", "V2", "Plus", "Fund", "Hub"});
  }

  std::string chain_payout() {
    const auto c = name({"Doubler", "EthPyramid", "FastReturn", "QuickProfit", "Multiplier"});
    const auto owner = one_of({"owner", "admin", "creator", "boss"});
    const auto list = one_of({"investors", "participants", "players", "queue"});
    const auto idx = one_of({"paidIndex", "payoutIdx", "cursor", "head"});
    const auto fee = num(3, 15);
    const auto mult = one_of({"2", "3", "150 / 100", "120 / 100"});
    return header() + "// " + c + ": deposit and get paid back " + mult + "x\n" +
           "contract " + c + " {\n"
           "    struct Entry {\n        address addr;\n        uint amount;\n    }\n\n"
           "    address public " + owner + ";\n"
           "    Entry[] public " + list + ";\n"
           "    uint public " + idx + " = 0;\n\n"
           "    constructor() public {\n        " + owner + " = msg.sender;\n    }\n\n"
           "    function() public payable {\n        join();\n    }\n\n"
           "    function join() public payable {\n"
           "        require(msg.value >= 0." + num(1, 9) + " ether);\n"
           "        " + list + ".push(Entry(msg.sender, msg.value));\n"
           "        " + owner + ".transfer(msg.value * " + fee + " / 100);\n"
           "        while (address(this).balance >= " + list + "[" + idx + "].amount * " + mult + ") {\n"
           "            uint payout = " + list + "[" + idx + "].amount * " + mult + ";\n"
           "            " + list + "[" + idx + "].addr.transfer(payout);\n"
           "            " + idx + " += 1;\n"
           "        }\n"
           "    }\n"
           "}\n";
  }

  std::string referral() {
    const auto c = name({"SmartMatrix", "ForsageLike", "ReferralClub", "EthLevels"});
    const auto refs = one_of({"referrer", "upline", "sponsor"});
    const auto level = num(2, 5);
    return header() + "contract " + c + " {\n"
           "    mapping(address => address) public " + refs + ";\n"
           "    mapping(address => uint) public invested;\n"
           "    address public owner = msg.sender;\n\n"
           "    function register(address parent) public payable {\n"
           "        require(msg.value == " + num(1, 5) + " ether);\n"
           "        " + refs + "[msg.sender] = parent;\n"
           "        invested[msg.sender] += msg.value;\n"
           "        address up = parent;\n"
           "        for (uint i = 0; i < " + level + "; i++) {\n"
           "            if (up == address(0)) {\n                break;\n            }\n"
           "            up.transfer(msg.value / " + num(3, 9) + ");\n"
           "            up = " + refs + "[up];\n"
           "        }\n"
           "        owner.transfer(address(this).balance);\n"
           "    }\n"
           "}\n";
  }

  std::string dividend_loop() {
    const auto c = name({"DailyDividend", "EthYield", "HourlyRoi", "Gradual"});
    const auto holders = one_of({"holders", "members", "depositors"});
    const auto pct = num(2, 12);
    return header() + "contract " + c + " {\n"
           "    address[] public " + holders + ";\n"
           "    mapping(address => uint) public deposits;\n"
           "    uint public totalDeposits;\n\n"
           "    /* every new deposit is shared among earlier " + holders + " */\n"
           "    function deposit() public payable {\n"
           "        uint share = msg.value * " + pct + " / 100;\n"
           "        for (uint i = 0; i < " + holders + ".length; i++) {\n"
           "            address h = " + holders + "[i];\n"
           "            h.transfer(share * deposits[h] / totalDeposits);\n"
           "        }\n"
           "        " + holders + ".push(msg.sender);\n"
           "        deposits[msg.sender] += msg.value;\n"
           "        totalDeposits += msg.value;\n"
           "    }\n"
           "}\n";
  }

  std::string doubler() {
    const auto c = name({"Rubixi", "Doubly", "TwiceBack", "Ponzi"});
    return header() + "contract " + c + " {\n"
           "    address private creator;\n"
           "    uint private balance = 0;\n"
           "    uint private collectedFees = 0;\n"
           "    uint private feePercent = " + num(5, 15) + ";\n"
           "    address[] private payouts;\n"
           "    uint[] private amounts;\n"
           "    uint private next = 0;\n\n"
           "    function " + c + "() {\n        creator = msg.sender;\n    }\n\n"
           "    function addPayout() private {\n"
           "        payouts.push(msg.sender);\n"
           "        amounts.push(msg.value * 2);\n"
           "        balance += (msg.value * (100 - feePercent)) / 100;\n"
           "        collectedFees += (msg.value * feePercent) / 100;\n"
           "        while (balance > amounts[next]) {\n"
           "            payouts[next].send(amounts[next]);\n"
           "            balance -= amounts[next];\n"
           "            next += 1;\n"
           "        }\n"
           "    }\n\n"
           "    function collectFees() {\n"
           "        if (msg.sender != creator) throw;\n"
           "        creator.send(collectedFees);\n"
           "        collectedFees = 0;\n"
           "    }\n"
           "}\n";
  }

  std::string token() {
    const auto c = name({"Token", "Coin", "Gold", "Share", "Credit"});
    const auto bal = one_of({"balances", "balanceOf", "holdings"});
    return header() + "contract " + c + " {\n"
           "    string public name = \"" + c + "\";\n"
           "    uint8 public decimals = 18;\n"
           "    uint256 public totalSupply;\n"
           "    mapping(address => uint256) public " + bal + ";\n"
           "    mapping(address => mapping(address => uint256)) public allowance;\n\n"
           "    event Transfer(address indexed from, address indexed to, uint256 value);\n\n"
           "    constructor(uint256 supply) public {\n"
           "        totalSupply = supply * 10 ** uint256(decimals);\n"
           "        " + bal + "[msg.sender] = totalSupply;\n"
           "    }\n\n"
           "    function transfer(address to, uint256 value) public returns (bool) {\n"
           "        require(" + bal + "[msg.sender] >= value);\n"
           "        " + bal + "[msg.sender] -= value;\n"
           "        " + bal + "[to] += value;\n"
           "        emit Transfer(msg.sender, to, value);\n"
           "        return true;\n"
           "    }\n\n"
           "    function approve(address spender, uint256 value) public returns (bool) {\n"
           "        allowance[msg.sender][spender] = value;\n"
           "        return true;\n"
           "    }\n\n"
           "    function transferFrom(address from, address to, uint256 value) public returns (bool) {\n"
           "        require(value <= allowance[from][msg.sender]);\n"
           "        allowance[from][msg.sender] -= value;\n"
           "        " + bal + "[from] -= value;\n"
           "        " + bal + "[to] += value;\n"
           "        emit Transfer(from, to, value);\n"
           "        return true;\n"
           "    }\n"
           "}\n";
  }

  std::string storage() {
    const auto c = name({"SimpleStorage", "Registry", "Notary", "Config"});
    const auto v = one_of({"storedData", "value", "record", "latest"});
    return header() + "contract " + c + " {\n"
           "    uint " + v + ";\n"
           "    address owner;\n"
           "    uint public updates;\n\n"
           "    modifier onlyOwner() {\n        require(msg.sender == owner);\n        _;\n    }\n\n"
           "    function " + c + "() public {\n        owner = msg.sender;\n    }\n\n"
           "    function set(uint x) public onlyOwner {\n"
           "        " + v + " = x;\n"
           "        updates++;\n"
           "    }\n\n"
           "    function get() public view returns (uint) {\n        return " + v + ";\n    }\n"
           "}\n";
  }

  std::string ballot() {
    const auto c = name({"Ballot", "Election", "Poll", "Referendum"});
    return header() + "contract " + c + " {\n"
           "    struct Proposal {\n        bytes32 name;\n        uint voteCount;\n    }\n\n"
           "    mapping(address => bool) public voted;\n"
           "    Proposal[] public proposals;\n"
           "    uint public deadline = now + " + num(1, 30) + " days;\n\n"
           "    function vote(uint proposal) public {\n"
           "        require(!voted[msg.sender] && now < deadline);\n"
           "        voted[msg.sender] = true;\n"
           "        proposals[proposal].voteCount += 1;\n"
           "    }\n\n"
           "    function winningProposal() public view returns (uint winner) {\n"
           "        uint best = 0;\n"
           "        for (uint p = 0; p < proposals.length; p++) {\n"
           "            if (proposals[p].voteCount > best) {\n"
           "                best = proposals[p].voteCount;\n"
           "                winner = p;\n"
           "            }\n"
           "        }\n"
           "    }\n"
           "}\n";
  }

  std::string crowdsale() {
    const auto c = name({"Crowdsale", "Presale", "TokenSale", "Ico"});
    return header() + "contract " + c + " {\n"
           "    address public wallet;\n"
           "    uint public rate = " + num(100, 5000) + ";\n"
           "    uint public weiRaised;\n"
           "    mapping(address => uint) public purchased;\n\n"
           "    constructor(address w) public {\n        wallet = w;\n    }\n\n"
           "    function buyTokens() public payable {\n"
           "        uint amount = msg.value;\n"
           "        uint tokens = amount * rate;\n"
           "        weiRaised = weiRaised + amount;\n"
           "        purchased[msg.sender] += tokens;\n"
           "        wallet.transfer(amount);\n"
           "    }\n"
           "}\n";
  }

  std::string escrow() {
    const auto c = name({"Escrow", "Deal", "SafeTrade", "Vault"});
    return header() + "contract " + c + " {\n"
           "    address public buyer;\n"
           "    address public seller;\n"
           "    address public arbiter;\n"
           "    bool public released;\n\n"
           "    constructor(address s, address a) public payable {\n"
           "        buyer = msg.sender;\n"
           "        seller = s;\n"
           "        arbiter = a;\n"
           "    }\n\n"
           "    function release() public {\n"
           "        require(msg.sender == buyer || msg.sender == arbiter);\n"
           "        require(!released);\n"
           "        released = true;\n"
           "        seller.transfer(address(this).balance);\n"
           "    }\n\n"
           "    function refund() public {\n"
           "        require(msg.sender == arbiter);\n"
           "        buyer.transfer(address(this).balance);\n"
           "    }\n"
           "}\n";
  }
};

}  // namespace sourcep::testing
