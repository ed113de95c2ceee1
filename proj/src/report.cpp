namespace fairscm {}
